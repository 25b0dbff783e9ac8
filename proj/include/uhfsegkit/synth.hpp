#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <set>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "uhfsegkit/labels.hpp"
#include "uhfsegkit/resample.hpp"
#include "uhfsegkit/rng.hpp"
#include "uhfsegkit/voxel_grid.hpp"

namespace uhfseg {

struct Interval {
    double lo = 0, hi = 0;
    double width() const { return hi - lo; }
};

// All randomization ranges for the generative model. Defaults follow the
// published domain-randomization recipe this family of tools builds on; every
// value is overridable from the JSON config.
struct SynthConfig {
    std::uint64_t seed = 0;
    int replication = 1;                       // synthetic cases per input label map
    Interval rotation_deg{-15, 15};
    Interval scale{0.85, 1.15};
    Interval shear{-0.012, 0.012};
    Interval translation_mm{-15, 15};
    double elastic_spacing_mm = 40.0;          // control-point spacing
    double elastic_std_mm = 3.0;               // displacement std at control points
    Interval gmm_mean{0, 255};
    Interval gmm_std{0, 35};
    double bias_scale_mm = 40.0;               // bias control-grid spacing
    double bias_std = 0.5;                     // log-amplitude std
    double gamma_std = 0.25;                   // std of log-gamma
    Interval resolution_mm{0.6, 3.0};          // simulated acquisition spacing
    bool intensity_synthesis = true;           // off = emit label maps only
    bool bias_enabled = true;
    bool gamma_enabled = true;
    bool resolution_enabled = true;

    void validate() const {
        if (replication < 1) throw std::invalid_argument("SynthConfig: replication must be >= 1");
        auto chk = [](const Interval& r, const char* what) {
            if (r.hi < r.lo) throw std::invalid_argument(std::string("SynthConfig: empty range for ") + what);
        };
        chk(rotation_deg, "rotation");
        chk(scale, "scale");
        chk(shear, "shear");
        chk(translation_mm, "translation");
        chk(gmm_mean, "gmm_mean");
        chk(gmm_std, "gmm_std");
        chk(resolution_mm, "resolution");
        if (elastic_spacing_mm <= 0 || bias_scale_mm <= 0)
            throw std::invalid_argument("SynthConfig: control-grid spacings must be positive");
    }
};

inline void to_json(nlohmann::json& j, const Interval& r) { j = {r.lo, r.hi}; }
inline void from_json(const nlohmann::json& j, Interval& r) {
    r.lo = j.at(0).get<double>();
    r.hi = j.at(1).get<double>();
}

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = nlohmann::json{{"seed", c.seed},
                       {"replication", c.replication},
                       {"rotation_deg", c.rotation_deg},
                       {"scale", c.scale},
                       {"shear", c.shear},
                       {"translation_mm", c.translation_mm},
                       {"elastic_spacing_mm", c.elastic_spacing_mm},
                       {"elastic_std_mm", c.elastic_std_mm},
                       {"gmm_mean", c.gmm_mean},
                       {"gmm_std", c.gmm_std},
                       {"bias_scale_mm", c.bias_scale_mm},
                       {"bias_std", c.bias_std},
                       {"gamma_std", c.gamma_std},
                       {"resolution_mm", c.resolution_mm},
                       {"intensity_synthesis", c.intensity_synthesis},
                       {"bias_enabled", c.bias_enabled},
                       {"gamma_enabled", c.gamma_enabled},
                       {"resolution_enabled", c.resolution_enabled}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
    c = SynthConfig{};
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("replication")) c.replication = j.at("replication").get<int>();
    if (j.contains("rotation_deg")) c.rotation_deg = j.at("rotation_deg").get<Interval>();
    if (j.contains("scale")) c.scale = j.at("scale").get<Interval>();
    if (j.contains("shear")) c.shear = j.at("shear").get<Interval>();
    if (j.contains("translation_mm")) c.translation_mm = j.at("translation_mm").get<Interval>();
    if (j.contains("elastic_spacing_mm")) c.elastic_spacing_mm = j.at("elastic_spacing_mm").get<double>();
    if (j.contains("elastic_std_mm")) c.elastic_std_mm = j.at("elastic_std_mm").get<double>();
    if (j.contains("gmm_mean")) c.gmm_mean = j.at("gmm_mean").get<Interval>();
    if (j.contains("gmm_std")) c.gmm_std = j.at("gmm_std").get<Interval>();
    if (j.contains("bias_scale_mm")) c.bias_scale_mm = j.at("bias_scale_mm").get<double>();
    if (j.contains("bias_std")) c.bias_std = j.at("bias_std").get<double>();
    if (j.contains("gamma_std")) c.gamma_std = j.at("gamma_std").get<double>();
    if (j.contains("resolution_mm")) c.resolution_mm = j.at("resolution_mm").get<Interval>();
    if (j.contains("intensity_synthesis")) c.intensity_synthesis = j.at("intensity_synthesis").get<bool>();
    if (j.contains("bias_enabled")) c.bias_enabled = j.at("bias_enabled").get<bool>();
    if (j.contains("gamma_enabled")) c.gamma_enabled = j.at("gamma_enabled").get<bool>();
    if (j.contains("resolution_enabled")) c.resolution_enabled = j.at("resolution_enabled").get<bool>();
}

// RNG stage ids; each synthesis stage draws from its own stream so toggling
// one stage never perturbs another.
namespace rng_stage {
constexpr std::uint64_t Affine = 1;
constexpr std::uint64_t Elastic = 2;
constexpr std::uint64_t Gmm = 3;
constexpr std::uint64_t Bias = 4;
constexpr std::uint64_t Gamma = 5;
constexpr std::uint64_t Resolution = 6;
}  // namespace rng_stage

// Low-resolution 3-vector control grid, evaluated by Catmull-Rom interpolation.
struct ControlField {
    Vec3 origin{0, 0, 0};       // world position of control point (0,0,0)
    double spacing = 1.0;       // control-point spacing, mm
    Index3 dims{0, 0, 0};
    std::vector<double> values; // dims-sized per component, 3 components

    double& at(int comp, std::int64_t i, std::int64_t j, std::int64_t k) {
        return values[comp * dims[0] * dims[1] * dims[2] + i + dims[0] * (j + dims[1] * k)];
    }
    double at(int comp, std::int64_t i, std::int64_t j, std::int64_t k) const {
        return values[comp * dims[0] * dims[1] * dims[2] + i + dims[0] * (j + dims[1] * k)];
    }

    static double catmull_rom(double p0, double p1, double p2, double p3, double t) {
        return 0.5 * ((2 * p1) + (-p0 + p2) * t + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t * t +
                      (-p0 + 3 * p1 - 3 * p2 + p3) * t * t * t);
    }

    Vec3 evaluate(const Vec3& world) const {
        Vec3 out{0, 0, 0};
        if (dims[0] == 0) return out;
        Vec3 g{(world[0] - origin[0]) / spacing, (world[1] - origin[1]) / spacing,
               (world[2] - origin[2]) / spacing};
        std::int64_t b[3];
        double t[3];
        for (int a = 0; a < 3; ++a) {
            double fl = std::floor(g[a]);
            b[a] = static_cast<std::int64_t>(fl);
            t[a] = g[a] - fl;
        }
        auto cl = [&](std::int64_t v, int axis) {
            return std::clamp<std::int64_t>(v, 0, dims[axis] - 1);
        };
        for (int comp = 0; comp < 3; ++comp) {
            double vz[4];
            for (int dk = -1; dk <= 2; ++dk) {
                double vy[4];
                for (int dj = -1; dj <= 2; ++dj) {
                    double vx[4];
                    for (int di = -1; di <= 2; ++di)
                        vx[di + 1] = at(comp, cl(b[0] + di, 0), cl(b[1] + dj, 1), cl(b[2] + dk, 2));
                    vy[dj + 1] = catmull_rom(vx[0], vx[1], vx[2], vx[3], t[0]);
                }
                vz[dk + 1] = catmull_rom(vy[0], vy[1], vy[2], vy[3], t[1]);
            }
            out[comp] = catmull_rom(vz[0], vz[1], vz[2], vz[3], t[2]);
        }
        return out;
    }
};

struct SpatialTransform {
    // sampled parameters (kept for provenance)
    Vec3 rotation_deg{0, 0, 0};
    Vec3 scale{1, 1, 1};
    Vec3 shear{0, 0, 0};
    Vec3 translation_mm{0, 0, 0};
    Affine world_map;          // forward anatomy motion, about the volume center
    Affine world_map_inv;
    ControlField elastic;      // displacement (mm) added to the source lookup point

    bool is_identity() const {
        return world_map.almost_equal(Affine::identity(), 0.0) && elastic.dims[0] == 0;
    }

    // Point in the source volume whose value lands at output world point x.
    Vec3 source_point(const Vec3& x) const {
        Vec3 y = world_map_inv.apply(x);
        if (elastic.dims[0] != 0) {
            Vec3 d = elastic.evaluate(x);
            y[0] += d[0];
            y[1] += d[1];
            y[2] += d[2];
        }
        return y;
    }

    nlohmann::json params_json() const {
        return {{"rotation_deg", rotation_deg},
                {"scale", scale},
                {"shear", shear},
                {"translation_mm", translation_mm},
                {"elastic_control_dims", elastic.dims},
                {"elastic_spacing_mm", elastic.spacing}};
    }
};

namespace synth_detail {

inline Affine rotation_matrix(const Vec3& deg) {
    auto rad = [](double d) { return d * 3.141592653589793238462643383279502884 / 180.0; };
    double cx = std::cos(rad(deg[0])), sx = std::sin(rad(deg[0]));
    double cy = std::cos(rad(deg[1])), sy = std::sin(rad(deg[1]));
    double cz = std::cos(rad(deg[2])), sz = std::sin(rad(deg[2]));
    Affine rx, ry, rz;
    rx(1, 1) = cx; rx(1, 2) = -sx; rx(2, 1) = sx; rx(2, 2) = cx;
    ry(0, 0) = cy; ry(0, 2) = sy; ry(2, 0) = -sy; ry(2, 2) = cy;
    rz(0, 0) = cz; rz(0, 1) = -sz; rz(1, 0) = sz; rz(1, 1) = cz;
    return rz * (ry * rx);
}

inline Affine compose_affine(const Vec3& rot_deg, const Vec3& scale, const Vec3& shear,
                             const Vec3& trans, const Vec3& center) {
    Affine s;
    for (int i = 0; i < 3; ++i) s(i, i) = scale[i];
    Affine sh;
    sh(0, 1) = shear[0];
    sh(0, 2) = shear[1];
    sh(1, 2) = shear[2];
    Affine m = rotation_matrix(rot_deg) * (sh * s);
    // translate so the composition acts about `center`, then add the shift
    Vec3 mc = m.apply(center);
    for (int i = 0; i < 3; ++i) m(i, 3) += center[i] - mc[i] + trans[i];
    return m;
}

inline Vec3 grid_center_world(const VoxelGrid& g) {
    return g.voxel_to_world(
        {(g.dims()[0] - 1) / 2.0, (g.dims()[1] - 1) / 2.0, (g.dims()[2] - 1) / 2.0});
}

// Scalar control field (bias) shares ControlField's storage using component 0.
inline ControlField random_control_field(const VoxelGrid& geom, double spacing, double std,
                                         int components, RngStream& rng) {
    ControlField f;
    f.spacing = spacing;
    // world-axis-aligned bounding box of the voxel grid corners
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (int c = 0; c < 8; ++c) {
        Vec3 v{(c & 1) ? double(geom.dims()[0] - 1) : 0.0, (c & 2) ? double(geom.dims()[1] - 1) : 0.0,
               (c & 4) ? double(geom.dims()[2] - 1) : 0.0};
        Vec3 w = geom.voxel_to_world(v);
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], w[a]);
            hi[a] = std::max(hi[a], w[a]);
        }
    }
    for (int a = 0; a < 3; ++a) {
        f.origin[a] = lo[a] - 2 * spacing;
        f.dims[a] = static_cast<std::int64_t>(std::ceil((hi[a] - lo[a]) / spacing)) + 5;
    }
    std::size_t n = static_cast<std::size_t>(f.dims[0]) * f.dims[1] * f.dims[2];
    f.values.assign(n * 3, 0.0);
    for (int comp = 0; comp < components; ++comp)
        for (std::size_t i = 0; i < n; ++i) f.values[comp * n + i] = rng.normal(0.0, std);
    return f;
}

// min Jacobian determinant of the source-point map over control points,
// by central differences.
inline double min_jacobian(const SpatialTransform& t, const VoxelGrid& geom) {
    const double h = 1.0;  // mm
    double min_det = 1e300;
    Vec3 lo = t.elastic.origin;
    Index3 d = t.elastic.dims;
    double sp = t.elastic.spacing;
    auto det_at = [&](const Vec3& x) {
        double J[3][3];
        for (int a = 0; a < 3; ++a) {
            Vec3 xp = x, xm = x;
            xp[a] += h;
            xm[a] -= h;
            Vec3 fp = t.source_point(xp), fm = t.source_point(xm);
            for (int r = 0; r < 3; ++r) J[r][a] = (fp[r] - fm[r]) / (2 * h);
        }
        return J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
               J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
               J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
    };
    if (d[0] == 0) {
        return det_at(grid_center_world(geom));
    }
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i)
                min_det = std::min(det_at({lo[0] + i * sp, lo[1] + j * sp, lo[2] + k * sp}),
                                   min_det);
    return min_det;
}

inline void gaussian_blur_axis(std::vector<double>& d, const Index3& dims, int axis,
                               double sigma_vox) {
    if (sigma_vox <= 1e-6) return;
    int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma_vox)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma_vox * sigma_vox));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    std::int64_t strides[3] = {1, dims[0], dims[0] * dims[1]};
    std::int64_t n = dims[axis];
    std::int64_t stride = strides[axis];
    std::vector<double> line(n);
    // iterate all lines along `axis`
    std::int64_t oa = (axis + 1) % 3, ob = (axis + 2) % 3;
    for (std::int64_t b = 0; b < dims[ob]; ++b)
        for (std::int64_t a = 0; a < dims[oa]; ++a) {
            std::int64_t base = a * strides[oa] + b * strides[ob];
            for (std::int64_t i = 0; i < n; ++i) line[i] = d[base + i * stride];
            for (std::int64_t i = 0; i < n; ++i) {
                double acc = 0;
                for (int k = -radius; k <= radius; ++k) {
                    std::int64_t src = std::clamp<std::int64_t>(i + k, 0, n - 1);
                    acc += kernel[k + radius] * line[src];
                }
                d[base + i * stride] = acc;
            }
        }
}

}  // namespace synth_detail

inline SpatialTransform sample_spatial_transform(const SynthConfig& cfg, const VoxelGrid& geom,
                                                 RngStream affine_rng, RngStream elastic_rng,
                                                 int max_retries = 10) {
    using namespace synth_detail;
    cfg.validate();
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        SpatialTransform t;
        for (int a = 0; a < 3; ++a) {
            t.rotation_deg[a] = affine_rng.uniform(cfg.rotation_deg.lo, cfg.rotation_deg.hi);
            t.scale[a] = affine_rng.uniform(cfg.scale.lo, cfg.scale.hi);
            t.shear[a] = affine_rng.uniform(cfg.shear.lo, cfg.shear.hi);
            t.translation_mm[a] = affine_rng.uniform(cfg.translation_mm.lo, cfg.translation_mm.hi);
        }
        t.world_map = compose_affine(t.rotation_deg, t.scale, t.shear, t.translation_mm,
                                     grid_center_world(geom));
        t.world_map_inv = t.world_map.inverse();
        if (cfg.elastic_std_mm > 0)
            t.elastic = random_control_field(geom, cfg.elastic_spacing_mm, cfg.elastic_std_mm, 3,
                                             elastic_rng);
        if (min_jacobian(t, geom) > 0) return t;
    }
    throw std::runtime_error("sample_spatial_transform: no invertible transform after retries");
}

inline LabelMap apply_transform_labels(const LabelMap& labels, const SpatialTransform& t) {
    const VoxelGrid& g = labels.grid;
    VoxelGrid outg = VoxelGrid::zeros(g.dims(), g.affine(), g.dtype());
    Affine inv = g.affine().inverse();
    auto& od = outg.mutable_data();
    const auto& src = g.data();
    const Index3& d = g.dims();
    std::size_t idx = 0;
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i, ++idx) {
                Vec3 x = g.voxel_to_world({double(i), double(j), double(k)});
                Vec3 v = inv.apply(t.source_point(x));
                std::int64_t si = std::llround(v[0]), sj = std::llround(v[1]),
                             sk = std::llround(v[2]);
                od[idx] = g.in_bounds(si, sj, sk) ? src[g.offset(si, sj, sk)]
                                                  : labels.background_id;
            }
    return LabelMap{std::move(outg), labels.convention, labels.background_id};
}

// exp of a smooth normal(0, bias_std) field on a coarse control grid,
// cubically upsampled; strictly positive.
inline VoxelGrid bias_field(const VoxelGrid& geom, const SynthConfig& cfg, RngStream rng) {
    using namespace synth_detail;
    if (cfg.bias_scale_mm <= 0) throw std::invalid_argument("bias_field: bias_scale must be > 0");
    VoxelGrid out = VoxelGrid::zeros(geom.dims(), geom.affine(), DataType::Float32);
    auto& od = out.mutable_data();
    if (cfg.bias_std == 0) {
        std::fill(od.begin(), od.end(), 1.0);
        return out;
    }
    ControlField f = random_control_field(geom, cfg.bias_scale_mm, cfg.bias_std, 1, rng);
    const Index3& d = geom.dims();
    std::size_t idx = 0;
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i, ++idx) {
                Vec3 x = geom.voxel_to_world({double(i), double(j), double(k)});
                od[idx] = std::exp(f.evaluate(x)[0]);
            }
    return out;
}

struct GmmDraw {
    std::map<int, double> means;
    std::map<int, double> stds;
};

// Stage 1 of intensity synthesis: one Gaussian per label id (background
// included), voxelwise draws. Returned unnormalized.
inline VoxelGrid render_gmm(const LabelMap& labels, const SynthConfig& cfg, RngStream& rng,
                            GmmDraw* draw_out = nullptr) {
    std::set<int> ids = labels.present_ids();
    ids.insert(labels.background_id);
    GmmDraw draw;
    for (int id : ids) {  // ascending id order keeps draws deterministic
        draw.means[id] = rng.uniform(cfg.gmm_mean.lo, cfg.gmm_mean.hi);
        draw.stds[id] = rng.uniform(cfg.gmm_std.lo, cfg.gmm_std.hi);
    }
    VoxelGrid img = VoxelGrid::zeros(labels.grid.dims(), labels.grid.affine(), DataType::Float32);
    auto& od = img.mutable_data();
    const auto& src = labels.grid.data();
    for (std::size_t i = 0; i < od.size(); ++i) {
        int id = static_cast<int>(src[i]);
        double s = draw.stds[id];
        od[i] = s == 0 ? draw.means[id] : rng.normal(draw.means[id], s);
    }
    if (draw_out) *draw_out = draw;
    return img;
}

namespace synth_detail {

inline void minmax_normalize(std::vector<double>& d) {
    auto [mn, mx] = std::minmax_element(d.begin(), d.end());
    double lo = *mn, hi = *mx;
    if (hi <= lo) {
        std::fill(d.begin(), d.end(), 0.0);
        return;
    }
    for (double& v : d) v = (v - lo) / (hi - lo);
}

inline void simulate_resolution(VoxelGrid& img, const Vec3& target_spacing) {
    Vec3 s = img.spacing();
    for (int a = 0; a < 3; ++a) {
        double t = target_spacing[a];
        if (t <= s[a]) continue;
        double sigma_mm = std::sqrt(t * t - s[a] * s[a]) / 2.355;  // FWHM-matched
        gaussian_blur_axis(img.mutable_data(), img.dims(), a, sigma_mm / s[a]);
    }
    bool any = target_spacing[0] > s[0] || target_spacing[1] > s[1] || target_spacing[2] > s[2];
    if (!any) return;
    Vec3 down{std::max(target_spacing[0], s[0]), std::max(target_spacing[1], s[1]),
              std::max(target_spacing[2], s[2])};
    VoxelGrid low = resample_image(img, ResampleSpec::to_spacing(down, ImageInterp::Linear));
    VoxelGrid back = resample_image(low, ResampleSpec::like(img, ImageInterp::Linear));
    img = std::move(back);
}

}  // namespace synth_detail

struct IntensityProvenance {
    GmmDraw gmm;
    double gamma = 1.0;
    Vec3 simulated_spacing{0, 0, 0};
};

// Full intensity stack, stage order GMM -> bias -> gamma -> resolution ->
// min-max normalization.
inline VoxelGrid synthesize_intensities(const LabelMap& labels, const SynthConfig& cfg,
                                        RngStream gmm_rng, RngStream bias_rng, RngStream gamma_rng,
                                        RngStream res_rng, IntensityProvenance* prov = nullptr) {
    if (!cfg.intensity_synthesis)
        throw std::logic_error("synthesize_intensities called with intensity_synthesis=off");
    IntensityProvenance p;
    VoxelGrid img = render_gmm(labels, cfg, gmm_rng, &p.gmm);
    auto& d = img.mutable_data();

    if (cfg.bias_enabled && cfg.bias_std > 0) {
        VoxelGrid b = bias_field(img, cfg, bias_rng);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= b.data()[i];
    }
    if (cfg.gamma_enabled && cfg.gamma_std > 0) {
        p.gamma = std::exp(gamma_rng.normal(0.0, cfg.gamma_std));
        synth_detail::minmax_normalize(d);
        for (double& v : d) v = std::pow(v, p.gamma);
    }
    if (cfg.resolution_enabled) {
        for (int a = 0; a < 3; ++a)
            p.simulated_spacing[a] = res_rng.uniform(cfg.resolution_mm.lo, cfg.resolution_mm.hi);
        synth_detail::simulate_resolution(img, p.simulated_spacing);
    }
    synth_detail::minmax_normalize(img.mutable_data());
    if (prov) *prov = p;
    return img;
}

struct SynthCase {
    std::size_t input_index = 0;
    int rep_index = 0;
    std::optional<VoxelGrid> image;
    LabelMap labels;
    nlohmann::json provenance;
};

inline SynthCase generate_case(const LabelMap& input, const SynthConfig& cfg,
                               std::size_t input_index, int rep_index, std::size_t case_index) {
    SpatialTransform t = sample_spatial_transform(
        cfg, input.grid, RngStream(cfg.seed, case_index, rng_stage::Affine),
        RngStream(cfg.seed, case_index, rng_stage::Elastic));
    SynthCase out{input_index, rep_index, std::nullopt,
                  apply_transform_labels(input, t), {}};
    out.provenance = {{"seed", cfg.seed},
                      {"case_index", case_index},
                      {"input_index", input_index},
                      {"rep_index", rep_index},
                      {"spatial", t.params_json()},
                      {"intensity_synthesis", cfg.intensity_synthesis}};
    if (cfg.intensity_synthesis) {
        IntensityProvenance ip;
        out.image = synthesize_intensities(
            out.labels, cfg, RngStream(cfg.seed, case_index, rng_stage::Gmm),
            RngStream(cfg.seed, case_index, rng_stage::Bias),
            RngStream(cfg.seed, case_index, rng_stage::Gamma),
            RngStream(cfg.seed, case_index, rng_stage::Resolution), &ip);
        nlohmann::json gmm;
        for (auto [id, m] : ip.gmm.means)
            gmm[std::to_string(id)] = {{"mean", m}, {"std", ip.gmm.stds[id]}};
        out.provenance["gmm"] = gmm;
        out.provenance["gamma"] = ip.gamma;
        out.provenance["simulated_spacing_mm"] = ip.simulated_spacing;
    }
    return out;
}

struct CaseFailure {
    std::size_t case_index;
    std::string message;
};

// Emits replication x |inputs| cases. Case (i, r) draws from RNG streams
// keyed by (seed, i * replication + r), so output is independent of worker
// count and emission order. on_case may be called from worker threads.
inline std::vector<CaseFailure> generate_corpus(
    const std::vector<LabelMap>& inputs, const SynthConfig& cfg,
    const std::function<void(SynthCase&&)>& on_case, int jobs = 1) {
    cfg.validate();
    if (inputs.empty()) throw std::invalid_argument("generate_corpus: no inputs");
    std::size_t total = inputs.size() * static_cast<std::size_t>(cfg.replication);
    std::vector<CaseFailure> failures;
    std::mutex fail_mu;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t c = next.fetch_add(1);
            if (c >= total) return;
            std::size_t i = c / cfg.replication;
            int r = static_cast<int>(c % cfg.replication);
            try {
                on_case(generate_case(inputs[i], cfg, i, r, c));
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lk(fail_mu);
                failures.push_back({c, e.what()});
            }
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    std::sort(failures.begin(), failures.end(),
              [](const CaseFailure& a, const CaseFailure& b) { return a.case_index < b.case_index; });
    return failures;
}

}  // namespace uhfseg
