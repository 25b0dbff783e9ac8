// uhfsegkit: command-line front end for the segmentation data-prep,
// evaluation and volumetry toolkit. One subcommand per library operation;
// batch-oriented, no interactive mode.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "uhfsegkit/uhfsegkit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

int default_jobs() {
    if (const char* env = std::getenv("UHFSEGKIT_JOBS")) {
        int j = std::atoi(env);
        if (j > 0) return j;
    }
    return 1;
}

std::vector<std::string> list_volumes(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        std::string p = e.path().string();
        if (p.size() > 4 && (p.ends_with(".nii") || p.ends_with(".nii.gz")))
            files.push_back(p);
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<std::pair<std::string, double>> load_tiv_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::vector<std::pair<std::string, double>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string subj, tiv;
        std::getline(ss, subj, ',');
        std::getline(ss, tiv, ',');
        if (subj == "subject_id") continue;
        rows.emplace_back(subj, std::stod(tiv));
    }
    return rows;
}

void write_tiv_svg(const uhfseg::TivComparison& cmp, const std::string& path) {
    double lo = 1e300, hi = -1e300;
    for (const auto& r : cmp.rows) {
        lo = std::min({lo, r.ours, r.reference});
        hi = std::max({hi, r.ours, r.reference});
    }
    double pad = 0.05 * (hi - lo + 1e-12);
    lo -= pad;
    hi += pad;
    const double W = 480, H = 480, M = 50;
    auto X = [&](double v) { return M + (v - lo) / (hi - lo) * (W - 2 * M); };
    auto Y = [&](double v) { return H - M - (v - lo) / (hi - lo) * (H - 2 * M); };
    std::ofstream f(path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    f << "<rect width='100%' height='100%' fill='white'/>\n";
    f << "<line x1='" << X(lo) << "' y1='" << Y(lo) << "' x2='" << X(hi) << "' y2='" << Y(hi)
      << "' stroke='gray' stroke-dasharray='4'/>\n";
    f << "<line x1='" << X(lo) << "' y1='" << Y(cmp.slope * lo + cmp.intercept) << "' x2='"
      << X(hi) << "' y2='" << Y(cmp.slope * hi + cmp.intercept) << "' stroke='steelblue'/>\n";
    for (const auto& r : cmp.rows)
        f << "<circle cx='" << X(r.reference) << "' cy='" << Y(r.ours)
          << "' r='3' fill='firebrick'/>\n";
    f << "<text x='" << M << "' y='" << M - 15 << "'>r = " << std::setprecision(4)
      << cmp.pearson_r << ", slope = " << cmp.slope << "</text>\n";
    f << "<text x='" << W / 2 - 40 << "' y='" << H - 10 << "'>reference TIV (mm3)</text>\n";
    f << "</svg>\n";
}

struct GroupStatsRow {
    std::string roi;
    std::string method;
    uhfseg::GroupSample a, b;
};

std::vector<GroupStatsRow> load_group_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    // key: (roi, method) -> group -> values
    std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<double>>> acc;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string subj, group, roi, value, method;
        std::getline(ss, subj, ',');
        std::getline(ss, group, ',');
        std::getline(ss, roi, ',');
        std::getline(ss, value, ',');
        std::getline(ss, method, ',');
        if (subj == "subject_id") continue;
        acc[{roi, method}][group].push_back(std::stod(value));
    }
    std::vector<GroupStatsRow> rows;
    for (auto& [key, groups] : acc) {
        if (groups.size() != 2)
            throw std::runtime_error("roi " + key.first + ": expected exactly 2 groups, got " +
                                     std::to_string(groups.size()));
        auto it = groups.begin();
        GroupStatsRow r;
        r.roi = key.first;
        r.method = key.second;
        r.a = {it->first, it->second};
        ++it;
        r.b = {it->first, it->second};
        rows.push_back(std::move(r));
    }
    return rows;
}

uhfseg::ImageInterp parse_image_order(const std::string& s) {
    if (s == "cubic") return uhfseg::ImageInterp::Cubic;
    if (s == "linear") return uhfseg::ImageInterp::Linear;
    if (s == "nearest") return uhfseg::ImageInterp::Nearest;
    throw CLI::ValidationError("--image-order must be cubic|linear|nearest");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"uhfsegkit: brain-segmentation data prep, evaluation and volumetry toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    std::cout << std::setprecision(12);

    int exit_code = 0;

    // prep-labels
    auto* prep = app.add_subcommand("prep-labels", "Assign CSF to unlabeled in-mask voxels");
    std::string prep_labels, prep_mask, prep_out;
    int prep_csf = uhfseg::fs::CSF;
    prep->add_option("--labels", prep_labels, "input label map (.nii/.nii.gz)")->required();
    prep->add_option("--mask", prep_mask, "binary brain mask")->required();
    prep->add_option("--out", prep_out, "output label map")->required();
    prep->add_option("--csf-id", prep_csf, "CSF label id (default 24)");
    prep->callback([&] {
        uhfseg::LabelMap lm{uhfseg::load_nifti(prep_labels), uhfseg::fs35(), 0};
        uhfseg::VoxelGrid mask = uhfseg::load_nifti(prep_mask);
        auto out = uhfseg::relabel_unassigned_to_csf(lm, mask, prep_csf);
        uhfseg::save_nifti(out.grid, prep_out, true);
    });

    // extract-cortex
    auto* exc = app.add_subcommand("extract-cortex",
                                   "Split cortex mask and DKT parcellation out of a label map");
    std::string exc_labels, exc_cortex, exc_parc;
    exc->add_option("--labels", exc_labels)->required();
    exc->add_option("--out-cortex", exc_cortex)->required();
    exc->add_option("--out-parcellation", exc_parc)->required();
    exc->callback([&] {
        uhfseg::LabelMap lm{uhfseg::load_nifti(exc_labels), uhfseg::fs35(), 0};
        auto [cortex, parc] = uhfseg::extract_cortex(lm);
        uhfseg::save_nifti(cortex.grid, exc_cortex, true);
        uhfseg::save_nifti(parc.grid, exc_parc, true);
    });

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a domain-randomized training corpus");
    std::string synth_cfg, synth_inputs, synth_out, synth_mode = "image";
    std::uint64_t synth_seed = 0;
    bool synth_seed_set = false;
    int synth_jobs = default_jobs();
    synth->add_option("--config", synth_cfg, "SynthConfig JSON")->required();
    synth->add_option("--inputs", synth_inputs, "directory of input label maps")->required();
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--mode", synth_mode, "image | labels-only");
    synth->add_option("--seed", synth_seed)->each([&](const std::string&) { synth_seed_set = true; });
    synth->add_option("--jobs", synth_jobs, "worker threads (env UHFSEGKIT_JOBS)");
    synth->callback([&] {
        std::ifstream cf(synth_cfg);
        if (!cf) throw std::runtime_error("cannot open config " + synth_cfg);
        uhfseg::SynthConfig cfg = json::parse(cf).get<uhfseg::SynthConfig>();
        if (synth_seed_set) cfg.seed = synth_seed;
        if (synth_mode == "labels-only") cfg.intensity_synthesis = false;
        else if (synth_mode != "image") throw CLI::ValidationError("--mode must be image|labels-only");

        std::vector<uhfseg::LabelMap> inputs;
        for (const auto& p : list_volumes(synth_inputs))
            inputs.push_back({uhfseg::load_nifti(p), uhfseg::fs35(), 0});
        if (inputs.empty()) throw std::runtime_error("no .nii/.nii.gz inputs in " + synth_inputs);
        fs::create_directories(synth_out);

        auto fails = uhfseg::generate_corpus(inputs, cfg, [&](uhfseg::SynthCase&& c) {
            std::string stem = (fs::path(synth_out) /
                                ("case_" + std::to_string(c.input_index) + "_" +
                                 std::to_string(c.rep_index)))
                                   .string();
            uhfseg::save_nifti(c.labels.grid, stem + "_labels.nii.gz", true);
            if (c.image) uhfseg::save_nifti(*c.image, stem + "_image.nii.gz", true);
            std::ofstream pf(stem + "_provenance.json");
            pf << c.provenance.dump(2) << "\n";
        }, synth_jobs);
        for (const auto& f : fails)
            std::cerr << "case " << f.case_index << " failed: " << f.message << "\n";
        if (!fails.empty()) exit_code = 2;
    });

    // resample
    auto* rs = app.add_subcommand("resample", "Resample an image or label map");
    std::string rs_in, rs_out, rs_like, rs_spacing, rs_order = "cubic", rs_label_mode = "onehot";
    bool rs_labels = false;
    rs->add_option("--in", rs_in)->required();
    rs->add_option("--out", rs_out)->required();
    rs->add_option("--target-spacing", rs_spacing, "a,b,c in mm");
    rs->add_option("--like", rs_like, "reference grid");
    rs->add_flag("--labels", rs_labels, "treat input as a label map");
    rs->add_option("--image-order", rs_order, "cubic|linear|nearest");
    rs->add_option("--label-mode", rs_label_mode, "onehot|nearest");
    rs->callback([&] {
        if (rs_spacing.empty() == rs_like.empty())
            throw CLI::ValidationError("exactly one of --target-spacing / --like required");
        uhfseg::LabelInterp lmode = rs_label_mode == "nearest" ? uhfseg::LabelInterp::Nearest
                                                               : uhfseg::LabelInterp::OneHotLinear;
        uhfseg::ResampleSpec spec;
        if (!rs_spacing.empty()) {
            uhfseg::Vec3 sp;
            if (std::sscanf(rs_spacing.c_str(), "%lf,%lf,%lf", &sp[0], &sp[1], &sp[2]) != 3)
                throw CLI::ValidationError("--target-spacing must be a,b,c");
            spec = uhfseg::ResampleSpec::to_spacing(sp, parse_image_order(rs_order), lmode);
        } else {
            spec = uhfseg::ResampleSpec::like(uhfseg::load_nifti(rs_like),
                                              parse_image_order(rs_order), lmode);
        }
        uhfseg::VoxelGrid in = uhfseg::load_nifti(rs_in);
        if (rs_labels) {
            uhfseg::LabelMap lm{std::move(in), uhfseg::fs35(), 0};
            uhfseg::save_nifti(uhfseg::resample_labels(lm, spec).grid, rs_out, true);
        } else {
            uhfseg::save_nifti(uhfseg::resample_image(in, spec), rs_out, true);
        }
    });

    // ensemble
    auto* ens = app.add_subcommand("ensemble", "Average per-fold softmax volumes and argmax");
    std::string ens_manifest, ens_out;
    ens->add_option("--manifest", ens_manifest, "folds JSON")->required();
    ens->add_option("--out", ens_out)->required();
    ens->callback([&] {
        std::ifstream mf(ens_manifest);
        if (!mf) throw std::runtime_error("cannot open " + ens_manifest);
        auto folds = uhfseg::load_fold_manifest(json::parse(mf),
                                                fs::path(ens_manifest).parent_path().string());
        auto seg = uhfseg::average_and_argmax(folds, uhfseg::fs35());
        uhfseg::save_nifti(seg.grid, ens_out, true);
    });

    // eval
    auto* ev = app.add_subcommand("eval", "DSC/ASD evaluation of prediction vs ground truth");
    std::string ev_gt, ev_pred, ev_mode = "whole-brain", ev_out, ev_exclude, ev_subject = "subject";
    ev->add_option("--gt", ev_gt)->required();
    ev->add_option("--pred", ev_pred)->required();
    ev->add_option("--mode", ev_mode, "whole-brain|cortex");
    ev->add_option("--out", ev_out, "output CSV")->required();
    ev->add_option("--exclude-file", ev_exclude, "override exclusion list (one id per line)");
    ev->add_option("--subject", ev_subject, "subject id written to the CSV");
    ev->callback([&] {
        const uhfseg::LabelConvention& conv =
            ev_mode == "cortex" ? uhfseg::dkt62() : uhfseg::fs35();
        if (ev_mode != "cortex" && ev_mode != "whole-brain")
            throw CLI::ValidationError("--mode must be whole-brain|cortex");
        uhfseg::LabelMap gt{uhfseg::load_nifti(ev_gt), conv, 0};
        uhfseg::LabelMap pred{uhfseg::load_nifti(ev_pred), conv, 0};
        std::optional<std::set<int>> override_ids;
        if (!ev_exclude.empty()) {
            std::ifstream xf(ev_exclude);
            if (!xf) throw std::runtime_error("cannot open " + ev_exclude);
            std::set<int> ids;
            int id;
            while (xf >> id) ids.insert(id);
            override_ids = ids;
        }
        uhfseg::ExclusionSet excl = uhfseg::evaluation_label_set(
            ev_mode == "cortex" ? uhfseg::EvalMode::Cortex : uhfseg::EvalMode::WholeBrain,
            override_ids ? &*override_ids : nullptr);
        std::cerr << "active exclusion list (" << excl.excluded_ids.size() << " ids):";
        for (int id : excl.excluded_ids) std::cerr << ' ' << id;
        std::cerr << "\n";

        uhfseg::MetricsReport rep = uhfseg::evaluate_pair(gt, pred, excl);
        std::ofstream f(ev_out);
        f << std::setprecision(12);
        f << "subject_id,label_id,label_name,dsc,asd_mm,g_voxels,p_voxels\n";
        for (const auto& m : rep.per_label) {
            f << ev_subject << ',' << m.label_id << ',' << m.label_name << ',' << m.dsc << ',';
            if (!std::isnan(m.asd_mm)) f << m.asd_mm;
            f << ',' << m.g_voxels << ',' << m.p_voxels << "\n";
        }
        f << ev_subject << ",,median," << rep.median_dsc << ',' << rep.median_asd << ",,\n";
        f << ev_subject << ",,q1," << rep.dsc_q1 << ',' << rep.asd_q1 << ",,\n";
        f << ev_subject << ",,q3," << rep.dsc_q3 << ',' << rep.asd_q3 << ",,\n";
    });

    // volumetry
    auto* vol = app.add_subcommand("volumetry", "Per-structure volumes, TIV and normalization");
    std::string vol_labels, vol_out, vol_subject = "subject", vol_conv = "FS35";
    double vol_tiv_override = 0;
    vol->add_option("--labels", vol_labels)->required();
    vol->add_option("--out", vol_out, "output CSV")->required();
    vol->add_option("--subject", vol_subject);
    vol->add_option("--convention", vol_conv, "FS35|DKT62|DK68");
    vol->add_option("--tiv-override", vol_tiv_override, "external TIV in mm3 (e.g. SPM estimate)");
    vol->callback([&] {
        uhfseg::LabelMap lm{uhfseg::load_nifti(vol_labels),
                            uhfseg::convention_by_name(vol_conv), 0};
        auto rep = uhfseg::structure_volumes(lm, vol_subject);
        rep = uhfseg::normalize_by_tiv(
            std::move(rep),
            vol_tiv_override > 0 ? std::optional<double>(vol_tiv_override) : std::nullopt);
        std::ofstream f(vol_out);
        f << std::setprecision(12);
        f << "subject_id,label_id,name,voxels,volume_mm3,normalized\n";
        for (const auto& r : rep.rows)
            f << vol_subject << ',' << r.label_id << ',' << r.name << ',' << r.voxels << ','
              << r.volume_mm3 << ',' << r.normalized << "\n";
        f << vol_subject << ",,tiv,," << rep.tiv_mm3 << ",\n";
        if (rep.tiv_override_mm3)
            f << vol_subject << ",,tiv_override,," << *rep.tiv_override_mm3 << ",\n";
    });

    // tiv-compare
    auto* tc = app.add_subcommand("tiv-compare", "Compare TIV estimates against a reference");
    std::string tc_ours, tc_ref, tc_out, tc_svg;
    tc->add_option("--ours", tc_ours, "CSV subject_id,tiv_mm3")->required();
    tc->add_option("--reference", tc_ref, "CSV subject_id,tiv_mm3")->required();
    tc->add_option("--out", tc_out, "output CSV")->required();
    tc->add_option("--svg", tc_svg, "optional scatter plot");
    tc->callback([&] {
        auto cmp = uhfseg::tiv_compare(load_tiv_csv(tc_ours), load_tiv_csv(tc_ref));
        std::ofstream f(tc_out);
        f << std::setprecision(12);
        f << "subject_id,tiv_ours_mm3,tiv_reference_mm3\n";
        for (const auto& r : cmp.rows)
            f << r.subject << ',' << r.ours << ',' << r.reference << "\n";
        f << "# pearson_r=" << cmp.pearson_r << " slope=" << cmp.slope
          << " intercept=" << cmp.intercept << "\n";
        if (!tc_svg.empty()) write_tiv_svg(cmp, tc_svg);
    });

    // group-stats
    auto* gs = app.add_subcommand("group-stats",
                                  "Mann-Whitney U with Bonferroni correction per ROI");
    std::string gs_in, gs_out;
    double gs_alpha = 0.05;
    std::size_t gs_m = 0;
    gs->add_option("--input", gs_in, "CSV subject_id,group,roi,normalized_volume[,method]")
        ->required();
    gs->add_option("--out", gs_out)->required();
    gs->add_option("--alpha", gs_alpha);
    gs->add_option("--m", gs_m, "comparison count for Bonferroni (default: number of tests)");
    gs->callback([&] {
        auto rows = load_group_csv(gs_in);
        std::size_t m = gs_m ? gs_m : rows.size();
        double threshold = uhfseg::bonferroni_threshold(gs_alpha, m);
        std::cerr << "Bonferroni: alpha=" << gs_alpha << " m=" << m
                  << " threshold=" << threshold << "\n";
        std::ofstream f(gs_out);
        f << std::setprecision(12);
        f << "roi,method,u,p_raw,p_adjusted,significant,exact\n";
        for (const auto& r : rows) {
            auto res = uhfseg::mann_whitney_u(r.a, r.b);
            double p_adj = std::min(1.0, res.p * static_cast<double>(m));
            f << r.roi << ',' << r.method << ',' << res.u << ',' << res.p << ',' << p_adj << ','
              << (res.p < threshold ? 1 : 0) << ',' << (res.exact ? 1 : 0) << "\n";
        }
    });

    // pipeline
    auto* pl = app.add_subcommand("pipeline", "Run a manifest-driven batch pipeline");
    std::string pl_manifest, pl_report;
    int pl_jobs = default_jobs();
    pl->add_option("--manifest", pl_manifest, "pipeline manifest JSON")->required();
    pl->add_option("--report", pl_report, "run report JSONL (default <output_root>/report.jsonl)");
    pl->add_option("--jobs", pl_jobs, "subject worker pool size");
    pl->callback([&] {
        std::ifstream mf(pl_manifest);
        if (!mf) throw std::runtime_error("cannot open " + pl_manifest);
        json mj;
        try {
            mj = json::parse(mf);
        } catch (const json::exception& e) {
            throw uhfseg::ManifestError(std::string("manifest: ") + e.what());
        }
        auto manifest = uhfseg::PipelineManifest::parse(mj);
        auto report = uhfseg::run_pipeline(manifest, pl_jobs);
        std::string rp = pl_report.empty()
                             ? (fs::path(manifest.output_root) / "report.jsonl").string()
                             : pl_report;
        uhfseg::write_run_report_jsonl(report, rp);
        std::cerr << report.subjects_ok << " subject(s) ok, " << report.subjects_failed
                  << " failed; report: " << rp << "\n";
        exit_code = report.exit_code();
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const uhfseg::ManifestError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const uhfseg::NiftiError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return exit_code;
}
