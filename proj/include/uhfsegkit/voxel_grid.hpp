#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "uhfsegkit/geometry.hpp"

namespace uhfseg {

// On-disk element kinds supported for NIfTI round-trips. Values are held in
// doubles in memory; integer kinds up to 32 bits and float32 are exactly
// representable, so save/load is bit-exact.
enum class DataType : std::uint8_t {
    UInt8,
    UInt16,
    UInt32,
    Int16,
    Int32,
    Float32,
    Float64,
};

inline const char* to_string(DataType dt) {
    switch (dt) {
        case DataType::UInt8: return "uint8";
        case DataType::UInt16: return "uint16";
        case DataType::UInt32: return "uint32";
        case DataType::Int16: return "int16";
        case DataType::Int32: return "int32";
        case DataType::Float32: return "float32";
        case DataType::Float64: return "float64";
    }
    return "?";
}

// Dense 3D scalar field. Voxel order is column-major (first axis fastest),
// matching the NIfTI convention. Treat instances as immutable once built.
class VoxelGrid {
public:
    VoxelGrid() = default;

    VoxelGrid(Index3 dims, Affine affine, DataType dtype, std::vector<double> data)
        : dims_(dims), affine_(affine), dtype_(dtype), data_(std::move(data)) {
        if (dims_[0] <= 0 || dims_[1] <= 0 || dims_[2] <= 0)
            throw std::invalid_argument("VoxelGrid: dims must be positive");
        if (static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2] != data_.size())
            throw std::invalid_argument("VoxelGrid: data length != product(dims)");
        if (std::abs(affine_.det3()) < 1e-300)
            throw std::invalid_argument("VoxelGrid: affine 3x3 block not invertible");
    }

    static VoxelGrid zeros(Index3 dims, Affine affine, DataType dtype = DataType::Float32) {
        std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
        return VoxelGrid(dims, affine, dtype, std::vector<double>(n, 0.0));
    }

    const Index3& dims() const { return dims_; }
    const Affine& affine() const { return affine_; }
    DataType dtype() const { return dtype_; }
    Vec3 spacing() const { return affine_.column_norms(); }
    std::size_t size() const { return data_.size(); }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& mutable_data() { return data_; }

    std::size_t offset(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return static_cast<std::size_t>(i) + dims_[0] * (static_cast<std::size_t>(j) + dims_[1] * k);
    }

    double at(std::int64_t i, std::int64_t j, std::int64_t k) const { return data_[offset(i, j, k)]; }
    double& at(std::int64_t i, std::int64_t j, std::int64_t k) { return data_[offset(i, j, k)]; }

    bool in_bounds(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return i >= 0 && j >= 0 && k >= 0 && i < dims_[0] && j < dims_[1] && k < dims_[2];
    }

    Vec3 voxel_to_world(const Vec3& index) const { return affine_.apply(index); }

    Vec3 world_to_voxel(const Vec3& world) const { return affine_.inverse().apply(world); }

    bool same_geometry(const VoxelGrid& o, double tol = 1e-6) const {
        return dims_ == o.dims_ && affine_.almost_equal(o.affine_, tol);
    }

private:
    Index3 dims_{0, 0, 0};
    Affine affine_;
    DataType dtype_ = DataType::Float32;
    std::vector<double> data_;
};

// One of the 48 signed axis permutations, e.g. "RAS", "LPS". Stores the
// mapping from canonical (RAS) voxel axes back to the original grid so a
// reorientation can be undone exactly.
struct Orientation {
    std::array<int, 3> axis{0, 1, 2};   // canonical axis k came from input axis axis[k]
    std::array<bool, 3> flipped{false, false, false};
    std::string code = "RAS";           // orientation of the *original* grid

    bool is_identity() const {
        return axis == std::array<int, 3>{0, 1, 2} && !flipped[0] && !flipped[1] && !flipped[2];
    }
};

// Orientation code of a grid: for each voxel axis, the world axis its
// direction vector is most aligned with (R/L, A/P, S/I).
inline std::string orientation_code(const Affine& affine) {
    static const char pos[3] = {'R', 'A', 'S'};
    static const char neg[3] = {'L', 'P', 'I'};
    std::string code;
    std::array<bool, 3> used{false, false, false};
    for (int c = 0; c < 3; ++c) {
        int best = -1;
        double best_abs = -1;
        for (int r = 0; r < 3; ++r) {
            if (used[r]) continue;
            if (std::abs(affine(r, c)) > best_abs) {
                best_abs = std::abs(affine(r, c));
                best = r;
            }
        }
        used[best] = true;
        code += affine(best, c) >= 0 ? pos[best] : neg[best];
    }
    return code;
}

namespace detail {

inline VoxelGrid permute_grid(const VoxelGrid& g, const std::array<int, 3>& axis,
                              const std::array<bool, 3>& flipped) {
    const Index3& d = g.dims();
    Index3 nd{d[axis[0]], d[axis[1]], d[axis[2]]};

    // New affine: new index -> old index -> world.
    Affine idx;  // maps new voxel index to old voxel index
    for (int i = 0; i < 16; ++i) idx.m[i] = 0;
    idx(3, 3) = 1;
    for (int k = 0; k < 3; ++k) {
        if (flipped[k]) {
            idx(axis[k], k) = -1;
            idx(axis[k], 3) = static_cast<double>(d[axis[k]] - 1);
        } else {
            idx(axis[k], k) = 1;
        }
    }
    Affine new_affine = g.affine() * idx;

    std::vector<double> out(g.size());
    Index3 oi;
    for (std::int64_t k = 0; k < nd[2]; ++k)
        for (std::int64_t j = 0; j < nd[1]; ++j)
            for (std::int64_t i = 0; i < nd[0]; ++i) {
                Index3 n{i, j, k};
                for (int a = 0; a < 3; ++a)
                    oi[axis[a]] = flipped[a] ? d[axis[a]] - 1 - n[a] : n[a];
                out[static_cast<std::size_t>(i) + nd[0] * (j + nd[1] * k)] =
                    g.at(oi[0], oi[1], oi[2]);
            }
    return VoxelGrid(nd, new_affine, g.dtype(), std::move(out));
}

}  // namespace detail

// Reorder voxel axes so the grid is in RAS order; world coordinates of every
// voxel center are unchanged. The returned Orientation undoes the operation.
inline std::pair<VoxelGrid, Orientation> reorient_canonical(const VoxelGrid& g) {
    const Affine& a = g.affine();
    if (std::abs(a.det3()) < 1e-300) throw std::runtime_error("reorient: degenerate affine");

    Orientation o;
    o.code = orientation_code(a);
    std::array<bool, 3> used{false, false, false};
    for (int world = 0; world < 3; ++world) {
        // pick the voxel axis dominantly aligned with this world axis
        int best = -1;
        double best_abs = -1;
        for (int c = 0; c < 3; ++c) {
            if (used[c]) continue;
            if (std::abs(a(world, c)) > best_abs) {
                best_abs = std::abs(a(world, c));
                best = c;
            }
        }
        used[best] = true;
        o.axis[world] = best;
        o.flipped[world] = a(world, best) < 0;
    }
    if (o.is_identity()) return {g, o};
    return {detail::permute_grid(g, o.axis, o.flipped), o};
}

// Inverse of reorient_canonical: restores the original voxel order bit-exactly.
inline VoxelGrid undo_reorient(const VoxelGrid& canonical, const Orientation& o) {
    if (o.is_identity()) return canonical;
    // Invert the signed permutation.
    std::array<int, 3> inv_axis;
    std::array<bool, 3> inv_flip;
    for (int k = 0; k < 3; ++k) {
        inv_axis[o.axis[k]] = k;
        inv_flip[o.axis[k]] = o.flipped[k];
    }
    return detail::permute_grid(canonical, inv_axis, inv_flip);
}

}  // namespace uhfseg
