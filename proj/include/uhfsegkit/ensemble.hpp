#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "uhfsegkit/labels.hpp"
#include "uhfsegkit/nifti.hpp"
#include "uhfsegkit/voxel_grid.hpp"

namespace uhfseg {

// Per-fold softmax output: one float volume per label channel, background
// included. Channel sums are allowed to drift by 1e-3 (float16 exports);
// probabilities are renormalized per voxel before use.
struct ProbabilityStack {
    std::vector<VoxelGrid> grids;
    std::vector<int> channel_ids;

    void validate() const {
        if (grids.empty()) throw std::invalid_argument("ProbabilityStack: no channels");
        if (grids.size() != channel_ids.size())
            throw std::invalid_argument("ProbabilityStack: channel/id count mismatch");
        for (const auto& g : grids) {
            if (!g.same_geometry(grids.front()))
                throw std::invalid_argument("ProbabilityStack: channel geometry mismatch");
            for (double v : g.data())
                if (!std::isfinite(v) || v < -1e-6 || v > 1 + 1e-6)
                    throw std::invalid_argument("ProbabilityStack: probability out of [0,1]");
        }
        for (std::size_t i = 0; i < grids.front().size(); ++i) {
            double s = 0;
            for (const auto& g : grids) s += g.data()[i];
            if (std::abs(s - 1.0) > 1e-3)
                throw std::invalid_argument("ProbabilityStack: voxel channel sum " +
                                            std::to_string(s) + " outside [1-1e-3, 1+1e-3]");
        }
    }
};

// Mean softmax across folds, then per-voxel argmax; ties break to the
// smallest channel id.
inline LabelMap average_and_argmax(const std::vector<ProbabilityStack>& folds,
                                   const LabelConvention& convention) {
    if (folds.empty()) throw std::invalid_argument("average_and_argmax: no folds");
    const ProbabilityStack& first = folds.front();
    first.validate();
    for (const auto& f : folds) {
        if (f.channel_ids != first.channel_ids)
            throw std::invalid_argument("average_and_argmax: channel ids differ across folds");
        if (!f.grids.front().same_geometry(first.grids.front()))
            throw std::invalid_argument("average_and_argmax: fold geometry mismatch");
        if (&f != &first) f.validate();
    }

    std::size_t nvox = first.grids.front().size();
    std::size_t nch = first.grids.size();

    // channel order sorted by id so the first maximal mean is the smallest id
    std::vector<std::size_t> order(nch);
    for (std::size_t c = 0; c < nch; ++c) order[c] = c;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return first.channel_ids[a] < first.channel_ids[b];
    });

    VoxelGrid outg = VoxelGrid::zeros(first.grids.front().dims(), first.grids.front().affine(),
                                      DataType::UInt16);
    auto& od = outg.mutable_data();
    std::vector<double> fold_sum(nch);
    for (std::size_t i = 0; i < nvox; ++i) {
        // per-fold renormalization before averaging
        for (std::size_t c = 0; c < nch; ++c) fold_sum[c] = 0;
        for (const auto& f : folds) {
            double s = 0;
            for (std::size_t c = 0; c < nch; ++c) s += f.grids[c].data()[i];
            for (std::size_t c = 0; c < nch; ++c) fold_sum[c] += f.grids[c].data()[i] / s;
        }
        double best = -1;
        int best_id = 0;
        for (std::size_t c : order) {
            if (fold_sum[c] > best) {
                best = fold_sum[c];
                best_id = first.channel_ids[c];
            }
        }
        od[i] = best_id;
    }
    return LabelMap{std::move(outg), convention, 0};
}

// Manifest: { "folds": [ { "channels": [ { "file": ..., "label_id": ... } ] } ] }
// Paths are resolved relative to `base_dir` when not absolute.
inline std::vector<ProbabilityStack> load_fold_manifest(const nlohmann::json& manifest,
                                                        const std::string& base_dir = "") {
    std::vector<ProbabilityStack> folds;
    for (const auto& fold : manifest.at("folds")) {
        ProbabilityStack ps;
        for (const auto& ch : fold.at("channels")) {
            std::string file = ch.at("file").get<std::string>();
            if (!base_dir.empty() && !file.empty() && file[0] != '/') file = base_dir + "/" + file;
            ps.grids.push_back(load_nifti(file));
            ps.channel_ids.push_back(ch.at("label_id").get<int>());
        }
        folds.push_back(std::move(ps));
    }
    return folds;
}

}  // namespace uhfseg
