#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>

#include "uhfsegkit/labels.hpp"
#include "uhfsegkit/voxel_grid.hpp"

namespace testutil {

using namespace uhfseg;

inline VoxelGrid make_grid(Index3 dims, double spacing = 1.0,
                           DataType dtype = DataType::Float32) {
    return VoxelGrid::zeros(dims, Affine::diagonal({spacing, spacing, spacing}), dtype);
}

inline LabelMap make_label_map(Index3 dims, double spacing = 1.0,
                               const LabelConvention& conv = fs35()) {
    return LabelMap{make_grid(dims, spacing, DataType::UInt16), conv, 0};
}

// axis-aligned filled box [lo, hi) in voxel coordinates, clipped to the grid
inline void fill_box(VoxelGrid& g, Index3 lo, Index3 hi, double value) {
    for (int a = 0; a < 3; ++a) {
        lo[a] = std::max<std::int64_t>(lo[a], 0);
        hi[a] = std::min(hi[a], g.dims()[a]);
    }
    for (std::int64_t k = lo[2]; k < hi[2]; ++k)
        for (std::int64_t j = lo[1]; j < hi[1]; ++j)
            for (std::int64_t i = lo[0]; i < hi[0]; ++i) g.at(i, j, k) = value;
}

inline void fill_sphere(VoxelGrid& g, Vec3 center, double radius, double value) {
    for (std::int64_t k = 0; k < g.dims()[2]; ++k)
        for (std::int64_t j = 0; j < g.dims()[1]; ++j)
            for (std::int64_t i = 0; i < g.dims()[0]; ++i) {
                double dx = i - center[0], dy = j - center[1], dz = k - center[2];
                if (dx * dx + dy * dy + dz * dz <= radius * radius) g.at(i, j, k) = value;
            }
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("uhfsegkit_test_" + tag + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testutil
