#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "uhfsegkit/labels.hpp"
#include "uhfsegkit/voxel_grid.hpp"

namespace uhfseg {

enum class ImageInterp { Cubic, Linear, Nearest };
enum class LabelInterp { OneHotLinear, Nearest };

struct ResampleSpec {
    std::optional<Vec3> target_spacing;
    std::optional<std::pair<Index3, Affine>> target_grid;
    ImageInterp image_order = ImageInterp::Cubic;
    LabelInterp label_mode = LabelInterp::OneHotLinear;

    static ResampleSpec to_spacing(const Vec3& sp, ImageInterp img = ImageInterp::Cubic,
                                   LabelInterp lab = LabelInterp::OneHotLinear) {
        if (sp[0] <= 0 || sp[1] <= 0 || sp[2] <= 0)
            throw std::invalid_argument("ResampleSpec: spacing must be positive");
        ResampleSpec s;
        s.target_spacing = sp;
        s.image_order = img;
        s.label_mode = lab;
        return s;
    }

    static ResampleSpec like(const VoxelGrid& ref, ImageInterp img = ImageInterp::Cubic,
                             LabelInterp lab = LabelInterp::OneHotLinear) {
        ResampleSpec s;
        s.target_grid = std::make_pair(ref.dims(), ref.affine());
        s.image_order = img;
        s.label_mode = lab;
        return s;
    }
};

namespace resample_detail {

// Target geometry preserving the world-space bounding box: voxel centers stay
// centered on the same world point, direction cosines kept, spacing replaced.
inline std::pair<Index3, Affine> target_geometry(const VoxelGrid& in, const ResampleSpec& spec) {
    if (spec.target_grid) return *spec.target_grid;
    if (!spec.target_spacing) throw std::invalid_argument("ResampleSpec: no target set");
    const Vec3& t = *spec.target_spacing;
    Vec3 s = in.spacing();
    Index3 nd;
    for (int i = 0; i < 3; ++i)
        nd[i] = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::llround(in.dims()[i] * s[i] / t[i])));
    Affine a = in.affine();
    for (int c = 0; c < 3; ++c) {
        double scale = t[c] / s[c];
        for (int r = 0; r < 3; ++r) a(r, c) *= scale;
    }
    // Keep the world position of the grid center fixed.
    Vec3 center_in = in.voxel_to_world({(in.dims()[0] - 1) / 2.0, (in.dims()[1] - 1) / 2.0,
                                        (in.dims()[2] - 1) / 2.0});
    Vec3 half{(nd[0] - 1) / 2.0, (nd[1] - 1) / 2.0, (nd[2] - 1) / 2.0};
    for (int r = 0; r < 3; ++r) {
        double off = a(r, 0) * half[0] + a(r, 1) * half[1] + a(r, 2) * half[2];
        a(r, 3) = center_in[r] - off;
    }
    return {nd, a};
}

constexpr double kSplinePole = -0.26794919243112270647;  // sqrt(3) - 2

// Unser-style causal/anticausal recursive prefilter along one axis with
// mirror boundaries, turning samples into interpolating B-spline coefficients.
inline void prefilter_line(double* c, std::int64_t n, std::int64_t stride) {
    if (n == 1) return;
    const double z = kSplinePole;
    const double lambda = (1.0 - z) * (1.0 - 1.0 / z);
    for (std::int64_t i = 0; i < n; ++i) c[i * stride] *= lambda;

    // causal init: truncated sum over the mirrored signal
    double tol_horizon = std::ceil(std::log(1e-12) / std::log(std::abs(z)));
    std::int64_t horizon = std::min<std::int64_t>(static_cast<std::int64_t>(tol_horizon), n);
    double sum = c[0];
    double zn = z;
    for (std::int64_t i = 1; i < horizon; ++i) {
        sum += zn * c[i * stride];
        zn *= z;
    }
    c[0] = sum;
    for (std::int64_t i = 1; i < n; ++i) c[i * stride] += z * c[(i - 1) * stride];

    // anticausal init
    c[(n - 1) * stride] = (z / (z * z - 1.0)) * (z * c[(n - 2) * stride] + c[(n - 1) * stride]);
    for (std::int64_t i = n - 2; i >= 0; --i)
        c[i * stride] = z * (c[(i + 1) * stride] - c[i * stride]);
}

inline void prefilter_volume(std::vector<double>& d, const Index3& dims) {
    const std::int64_t nx = dims[0], ny = dims[1], nz = dims[2];
    for (std::int64_t k = 0; k < nz; ++k)
        for (std::int64_t j = 0; j < ny; ++j) prefilter_line(&d[nx * (j + ny * k)], nx, 1);
    for (std::int64_t k = 0; k < nz; ++k)
        for (std::int64_t i = 0; i < nx; ++i) prefilter_line(&d[i + nx * ny * k], ny, nx);
    for (std::int64_t j = 0; j < ny; ++j)
        for (std::int64_t i = 0; i < nx; ++i) prefilter_line(&d[i + nx * j], nz, nx * ny);
}

inline void bspline_weights(double t, double w[4]) {
    double t2 = t * t, t3 = t2 * t;
    w[0] = (1.0 - 3.0 * t + 3.0 * t2 - t3) / 6.0;
    w[1] = (4.0 - 6.0 * t2 + 3.0 * t3) / 6.0;
    w[2] = (1.0 + 3.0 * t + 3.0 * t2 - 3.0 * t3) / 6.0;
    w[3] = t3 / 6.0;
}

inline std::int64_t clampi(std::int64_t v, std::int64_t lo, std::int64_t hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

// Mirror reflection about the sample centers (period 2n-2), matching the
// boundary model the prefilter assumes.
inline std::int64_t mirrori(std::int64_t v, std::int64_t n) {
    if (n == 1) return 0;
    std::int64_t period = 2 * (n - 1);
    v = std::abs(v) % period;
    return v < n ? v : period - v;
}

// Cubic B-spline evaluation on prefiltered coefficients. Out-of-field sample
// positions are clamped to the volume edge; the 4-tap neighborhood is
// mirror-reflected so reconstruction at the samples is exact.
inline double sample_cubic(const std::vector<double>& c, const Index3& dims, const Vec3& p) {
    double w[3][4];
    std::int64_t base[3];
    for (int a = 0; a < 3; ++a) {
        double pa = std::min(std::max(p[a], 0.0), double(dims[a] - 1));
        double fl = std::floor(pa);
        bspline_weights(pa - fl, w[a]);
        base[a] = static_cast<std::int64_t>(fl) - 1;
    }
    double acc = 0;
    for (int dk = 0; dk < 4; ++dk) {
        std::int64_t k = mirrori(base[2] + dk, dims[2]);
        for (int dj = 0; dj < 4; ++dj) {
            std::int64_t j = mirrori(base[1] + dj, dims[1]);
            double wjk = w[1][dj] * w[2][dk];
            for (int di = 0; di < 4; ++di) {
                std::int64_t i = mirrori(base[0] + di, dims[0]);
                acc += w[0][di] * wjk * c[i + dims[0] * (j + dims[1] * k)];
            }
        }
    }
    return acc;
}

inline double sample_linear(const std::vector<double>& d, const Index3& dims, const Vec3& p) {
    std::int64_t i0 = static_cast<std::int64_t>(std::floor(p[0]));
    std::int64_t j0 = static_cast<std::int64_t>(std::floor(p[1]));
    std::int64_t k0 = static_cast<std::int64_t>(std::floor(p[2]));
    double fx = p[0] - i0, fy = p[1] - j0, fz = p[2] - k0;
    double acc = 0;
    for (int dk = 0; dk < 2; ++dk) {
        std::int64_t k = clampi(k0 + dk, 0, dims[2] - 1);
        double wz = dk ? fz : 1 - fz;
        for (int dj = 0; dj < 2; ++dj) {
            std::int64_t j = clampi(j0 + dj, 0, dims[1] - 1);
            double wy = dj ? fy : 1 - fy;
            for (int di = 0; di < 2; ++di) {
                std::int64_t i = clampi(i0 + di, 0, dims[0] - 1);
                double wx = di ? fx : 1 - fx;
                acc += wx * wy * wz * d[i + dims[0] * (j + dims[1] * k)];
            }
        }
    }
    return acc;
}

inline double sample_nearest(const std::vector<double>& d, const Index3& dims, const Vec3& p) {
    std::int64_t i = clampi(static_cast<std::int64_t>(std::llround(p[0])), 0, dims[0] - 1);
    std::int64_t j = clampi(static_cast<std::int64_t>(std::llround(p[1])), 0, dims[1] - 1);
    std::int64_t k = clampi(static_cast<std::int64_t>(std::llround(p[2])), 0, dims[2] - 1);
    return d[i + dims[0] * (j + dims[1] * k)];
}

}  // namespace resample_detail

inline VoxelGrid resample_image(const VoxelGrid& img, const ResampleSpec& spec) {
    using namespace resample_detail;
    for (double v : img.data())
        if (!std::isfinite(v)) throw std::invalid_argument("resample_image: non-finite input value");

    auto [nd, na] = target_geometry(img, spec);

    std::vector<double> coeff = img.data();
    if (spec.image_order == ImageInterp::Cubic) prefilter_volume(coeff, img.dims());

    Affine world_to_in = img.affine().inverse();
    Affine map = world_to_in * na;  // target index -> source index

    VoxelGrid out = VoxelGrid::zeros(nd, na, img.dtype());
    auto& od = out.mutable_data();
    std::size_t idx = 0;
    for (std::int64_t k = 0; k < nd[2]; ++k)
        for (std::int64_t j = 0; j < nd[1]; ++j)
            for (std::int64_t i = 0; i < nd[0]; ++i, ++idx) {
                Vec3 p = map.apply({double(i), double(j), double(k)});
                switch (spec.image_order) {
                    case ImageInterp::Cubic: od[idx] = sample_cubic(coeff, img.dims(), p); break;
                    case ImageInterp::Linear: od[idx] = sample_linear(coeff, img.dims(), p); break;
                    case ImageInterp::Nearest: od[idx] = sample_nearest(coeff, img.dims(), p); break;
                }
            }
    return out;
}

// Per-label indicator trilinear interpolation followed by argmax; background
// competes as its own channel; ties break to the smallest id. Implemented per
// output voxel over the 8-neighbor support, which is exactly equivalent to
// materializing L one-hot volumes.
inline LabelMap resample_labels(const LabelMap& labels, const ResampleSpec& spec) {
    using namespace resample_detail;
    auto [nd, na] = target_geometry(labels.grid, spec);

    Affine map = labels.grid.affine().inverse() * na;
    const Index3& sd = labels.grid.dims();
    const auto& src = labels.grid.data();

    VoxelGrid outg = VoxelGrid::zeros(nd, na, labels.grid.dtype());
    auto& od = outg.mutable_data();
    std::size_t idx = 0;
    std::map<int, double> weights;
    for (std::int64_t k = 0; k < nd[2]; ++k)
        for (std::int64_t j = 0; j < nd[1]; ++j)
            for (std::int64_t i = 0; i < nd[0]; ++i, ++idx) {
                Vec3 p = map.apply({double(i), double(j), double(k)});
                if (spec.label_mode == LabelInterp::Nearest) {
                    od[idx] = sample_nearest(src, sd, p);
                    continue;
                }
                weights.clear();
                std::int64_t i0 = static_cast<std::int64_t>(std::floor(p[0]));
                std::int64_t j0 = static_cast<std::int64_t>(std::floor(p[1]));
                std::int64_t k0 = static_cast<std::int64_t>(std::floor(p[2]));
                double fx = p[0] - i0, fy = p[1] - j0, fz = p[2] - k0;
                for (int dk = 0; dk < 2; ++dk) {
                    std::int64_t kk = clampi(k0 + dk, 0, sd[2] - 1);
                    double wz = dk ? fz : 1 - fz;
                    for (int dj = 0; dj < 2; ++dj) {
                        std::int64_t jj = clampi(j0 + dj, 0, sd[1] - 1);
                        double wy = dj ? fy : 1 - fy;
                        for (int di = 0; di < 2; ++di) {
                            std::int64_t ii = clampi(i0 + di, 0, sd[0] - 1);
                            double w = (di ? fx : 1 - fx) * wy * wz;
                            if (w <= 0) continue;
                            weights[static_cast<int>(src[ii + sd[0] * (jj + sd[1] * kk)])] += w;
                        }
                    }
                }
                // argmax; std::map iterates ids ascending so strict > breaks
                // ties toward the smallest id
                int best_id = labels.background_id;
                double best_w = -1;
                for (auto [id, w] : weights)
                    if (w > best_w + 1e-12) {
                        best_w = w;
                        best_id = id;
                    }
                od[idx] = best_id;
            }
    return LabelMap{std::move(outg), labels.convention, labels.background_id};
}

}  // namespace uhfseg
