#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <stdexcept>
#include <vector>

#include "uhfsegkit/labels.hpp"
#include "uhfsegkit/voxel_grid.hpp"

namespace uhfseg {

struct SurfacePointSet {
    std::vector<Vec3> points;  // world mm, voxel centers on the 6-connected boundary
    std::size_t count() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

// Static median-split KD-tree for exact nearest-neighbor distances.
class KdTree3 {
public:
    explicit KdTree3(std::vector<Vec3> pts) : pts_(std::move(pts)) {
        idx_.resize(pts_.size());
        for (std::size_t i = 0; i < idx_.size(); ++i) idx_[i] = i;
        if (!idx_.empty()) build(0, idx_.size(), 0);
    }

    bool empty() const { return pts_.empty(); }

    double nearest_distance(const Vec3& q) const {
        if (pts_.empty()) return std::numeric_limits<double>::quiet_NaN();
        double best = std::numeric_limits<double>::infinity();
        search(q, 0, idx_.size(), 0, best);
        return std::sqrt(best);
    }

private:
    void build(std::size_t lo, std::size_t hi, int axis) {
        if (hi - lo <= 1) return;
        std::size_t mid = (lo + hi) / 2;
        std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi,
                         [&](std::size_t a, std::size_t b) { return pts_[a][axis] < pts_[b][axis]; });
        build(lo, mid, (axis + 1) % 3);
        build(mid + 1, hi, (axis + 1) % 3);
    }

    void search(const Vec3& q, std::size_t lo, std::size_t hi, int axis, double& best) const {
        if (lo >= hi) return;
        std::size_t mid = (lo + hi) / 2;
        const Vec3& p = pts_[idx_[mid]];
        double d2 = 0;
        for (int a = 0; a < 3; ++a) d2 += (p[a] - q[a]) * (p[a] - q[a]);
        best = std::min(best, d2);
        double delta = q[axis] - p[axis];
        int next = (axis + 1) % 3;
        if (delta < 0) {
            search(q, lo, mid, next, best);
            if (delta * delta < best) search(q, mid + 1, hi, next, best);
        } else {
            search(q, mid + 1, hi, next, best);
            if (delta * delta < best) search(q, lo, mid, next, best);
        }
    }

    std::vector<Vec3> pts_;
    std::vector<std::size_t> idx_;
};

// Dice-Sorensen coefficient over voxel supports: 2|G n P| / (|G| + |P|).
// Exactly one empty support scores 0; both empty scores 1 (vacuous match).
inline double dsc(const VoxelGrid& gt, const VoxelGrid& pred, int label_id) {
    if (gt.dims() != pred.dims()) throw std::invalid_argument("dsc: grid dims differ");
    std::size_t ng = 0, np = 0, ni = 0;
    const auto& g = gt.data();
    const auto& p = pred.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
        bool a = static_cast<int>(g[i]) == label_id;
        bool b = static_cast<int>(p[i]) == label_id;
        ng += a;
        np += b;
        ni += a && b;
    }
    if (ng == 0 && np == 0) return 1.0;
    if (ng == 0 || np == 0) return 0.0;
    return 2.0 * static_cast<double>(ni) / static_cast<double>(ng + np);
}

// World coordinates of voxel centers of `id` with at least one 6-connected
// neighbor not equal to id; volume faces count as boundary.
inline SurfacePointSet extract_surface(const LabelMap& labels, int id) {
    SurfacePointSet s;
    const VoxelGrid& g = labels.grid;
    const Index3& d = g.dims();
    const auto& v = g.data();
    static const int nb[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    std::size_t idx = 0;
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i, ++idx) {
                if (static_cast<int>(v[idx]) != id) continue;
                bool boundary = false;
                for (const auto& n : nb) {
                    std::int64_t ni = i + n[0], nj = j + n[1], nk = k + n[2];
                    if (!g.in_bounds(ni, nj, nk) ||
                        static_cast<int>(v[g.offset(ni, nj, nk)]) != id) {
                        boundary = true;
                        break;
                    }
                }
                if (boundary)
                    s.points.push_back(g.voxel_to_world({double(i), double(j), double(k)}));
            }
    return s;
}

// Average symmetric surface distance in mm; NaN when either surface is empty.
inline double asd(const SurfacePointSet& g, const SurfacePointSet& p) {
    if (g.empty() || p.empty()) return std::numeric_limits<double>::quiet_NaN();
    KdTree3 gt(g.points), pt(p.points);
    double sum = 0;
    for (const Vec3& q : g.points) sum += pt.nearest_distance(q);
    for (const Vec3& q : p.points) sum += gt.nearest_distance(q);
    return sum / static_cast<double>(g.count() + p.count());
}

struct LabelMetrics {
    int label_id;
    std::string label_name;
    double dsc;
    double asd_mm;  // NaN when a surface is empty
    std::size_t g_voxels;
    std::size_t p_voxels;
};

struct MetricsReport {
    std::vector<LabelMetrics> per_label;
    ExclusionSet excluded;
    double median_dsc = 0, dsc_q1 = 0, dsc_q3 = 0;
    double median_asd = 0, asd_q1 = 0, asd_q3 = 0;
    std::size_t nan_asd_dropped = 0;
};

// Linear-interpolation (type-7) quantile of a sorted vector.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (sorted.size() == 1) return sorted[0];
    double h = q * (sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - lo) * (sorted[hi] - sorted[lo]);
}

inline MetricsReport evaluate_pair(const LabelMap& gt, const LabelMap& pred,
                                   const ExclusionSet& excl) {
    if (!gt.grid.same_geometry(pred.grid, 1e-4))
        throw std::invalid_argument("evaluate_pair: grids differ; resample first");

    MetricsReport rep;
    rep.excluded = excl;
    for (const auto& entry : gt.convention.entries()) {
        if (excl.excluded_ids.count(entry.id)) continue;
        LabelMetrics m{entry.id, entry.name, 0, 0, 0, 0};
        for (double v : gt.grid.data()) m.g_voxels += static_cast<int>(v) == entry.id;
        for (double v : pred.grid.data()) m.p_voxels += static_cast<int>(v) == entry.id;
        m.dsc = dsc(gt.grid, pred.grid, entry.id);
        m.asd_mm = asd(extract_surface(gt, entry.id), extract_surface(pred, entry.id));
        rep.per_label.push_back(std::move(m));
    }
    if (rep.per_label.empty()) throw std::runtime_error("evaluate_pair: empty evaluated label set");

    std::vector<double> ds, as;
    for (const auto& m : rep.per_label) {
        ds.push_back(m.dsc);
        if (std::isnan(m.asd_mm)) {
            ++rep.nan_asd_dropped;
        } else {
            as.push_back(m.asd_mm);
        }
    }
    std::sort(ds.begin(), ds.end());
    std::sort(as.begin(), as.end());
    rep.median_dsc = quantile_sorted(ds, 0.5);
    rep.dsc_q1 = quantile_sorted(ds, 0.25);
    rep.dsc_q3 = quantile_sorted(ds, 0.75);
    rep.median_asd = quantile_sorted(as, 0.5);
    rep.asd_q1 = quantile_sorted(as, 0.25);
    rep.asd_q3 = quantile_sorted(as, 0.75);
    return rep;
}

}  // namespace uhfseg
