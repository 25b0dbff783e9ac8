#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "uhfsegkit/labels.hpp"

namespace uhfseg {

struct VolumeRow {
    int label_id;
    std::string name;
    std::size_t voxels;
    double volume_mm3;
    double normalized = 0;  // volume / TIV, filled by normalize_by_tiv
};

struct VolumeReport {
    std::string subject_id;
    std::vector<VolumeRow> rows;
    double tiv_mm3 = 0;                         // sum over all nonbackground structures
    std::optional<double> tiv_override_mm3;     // external (e.g. SPM-style) value, when used
};

// Voxel counts per structure; volume = count x voxel volume (product of
// spacing components, anisotropic safe). TIV sums every nonbackground row.
inline VolumeReport structure_volumes(const LabelMap& labels,
                                      const std::string& subject_id = "") {
    Vec3 sp = labels.grid.spacing();
    double voxel_vol = sp[0] * sp[1] * sp[2];
    std::map<int, std::size_t> counts;
    for (double v : labels.grid.data()) {
        int id = static_cast<int>(v);
        if (id != labels.background_id) ++counts[id];
    }
    VolumeReport rep;
    rep.subject_id = subject_id;
    for (auto [id, n] : counts) {
        const LabelEntry* e = labels.convention.find(id);
        rep.rows.push_back({id, e ? e->name : "label-" + std::to_string(id), n,
                            static_cast<double>(n) * voxel_vol});
        rep.tiv_mm3 += rep.rows.back().volume_mm3;
    }
    return rep;
}

inline VolumeReport normalize_by_tiv(VolumeReport report,
                                     std::optional<double> tiv_override = std::nullopt) {
    double tiv = tiv_override.value_or(report.tiv_mm3);
    if (tiv <= 0) throw std::invalid_argument("normalize_by_tiv: TIV must be positive");
    report.tiv_override_mm3 = tiv_override;
    for (auto& r : report.rows) r.normalized = r.volume_mm3 / tiv;
    return report;
}

struct TivComparison {
    struct Row {
        std::string subject;
        double ours;
        double reference;
    };
    std::vector<Row> rows;
    double pearson_r = 0;
    double slope = 0;
    double intercept = 0;
};

// Match by subject id; Pearson r and least-squares line of ours vs reference.
inline TivComparison tiv_compare(const std::vector<std::pair<std::string, double>>& ours,
                                 const std::vector<std::pair<std::string, double>>& reference) {
    std::map<std::string, double> ref(reference.begin(), reference.end());
    TivComparison cmp;
    for (const auto& [subj, v] : ours) {
        auto it = ref.find(subj);
        if (it != ref.end()) cmp.rows.push_back({subj, v, it->second});
    }
    std::size_t n = cmp.rows.size();
    if (n < 3) throw std::invalid_argument("tiv_compare: fewer than 3 matched subjects");

    double sx = 0, sy = 0;
    for (const auto& r : cmp.rows) {
        sx += r.reference;
        sy += r.ours;
    }
    double mx = sx / n, my = sy / n;
    double sxx = 0, syy = 0, sxy = 0;
    for (const auto& r : cmp.rows) {
        sxx += (r.reference - mx) * (r.reference - mx);
        syy += (r.ours - my) * (r.ours - my);
        sxy += (r.reference - mx) * (r.ours - my);
    }
    if (sxx == 0 || syy == 0) throw std::invalid_argument("tiv_compare: zero-variance series");
    cmp.pearson_r = sxy / std::sqrt(sxx * syy);
    cmp.slope = sxy / sxx;
    cmp.intercept = my - cmp.slope * mx;
    return cmp;
}

}  // namespace uhfseg
