#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "uhfsegkit/ensemble.hpp"
#include "uhfsegkit/labels.hpp"
#include "uhfsegkit/metrics.hpp"
#include "uhfsegkit/nifti.hpp"
#include "uhfsegkit/resample.hpp"
#include "uhfsegkit/synth.hpp"
#include "uhfsegkit/volumetry.hpp"

namespace uhfseg {

struct ManifestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StageConfig {
    std::string name;
    std::string type;   // prep-labels | extract-cortex | resample | synth |
                        // ensemble | eval | volumetry | exec
    std::string task;   // exec only: segmentation | parcellation | other
    nlohmann::json params;
};

struct SubjectSpec {
    std::string id;
    std::map<std::string, std::string> inputs;
};

struct PipelineManifest {
    std::uint64_t seed = 0;
    std::string output_root;
    std::vector<SubjectSpec> subjects;
    std::vector<StageConfig> stages;

    static PipelineManifest parse(const nlohmann::json& j);
    void validate() const;
};

inline PipelineManifest PipelineManifest::parse(const nlohmann::json& j) {
    PipelineManifest m;
    try {
        m.seed = j.value("seed", std::uint64_t{0});
        if (!j.contains("output_root")) throw ManifestError("manifest: output_root missing");
        m.output_root = j.at("output_root").get<std::string>();
        for (const auto& s : j.at("subjects")) {
            SubjectSpec spec;
            spec.id = s.at("id").get<std::string>();
            if (s.contains("inputs"))
                for (auto it = s.at("inputs").begin(); it != s.at("inputs").end(); ++it)
                    spec.inputs[it.key()] = it.value().get<std::string>();
            m.subjects.push_back(std::move(spec));
        }
        for (const auto& st : j.at("stages")) {
            StageConfig c;
            c.name = st.at("name").get<std::string>();
            c.type = st.at("type").get<std::string>();
            c.task = st.value("task", std::string{});
            c.params = st;
            m.stages.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError(std::string("manifest: ") + e.what());
    }
    m.validate();
    return m;
}

inline void PipelineManifest::validate() const {
    if (subjects.empty()) throw ManifestError("manifest: no subjects");
    if (stages.empty()) throw ManifestError("manifest: no stages");
    std::set<std::string> names;
    bool seen_segmentation = false;
    static const std::set<std::string> known = {"prep-labels", "extract-cortex", "resample",
                                                "synth",       "ensemble",       "eval",
                                                "volumetry",   "exec"};
    for (const auto& s : stages) {
        if (!names.insert(s.name).second)
            throw ManifestError("manifest: duplicate stage name " + s.name);
        if (!known.count(s.type)) throw ManifestError("manifest: unknown stage type " + s.type);
        if (s.task == "segmentation") seen_segmentation = true;
        // Parcellation depends on the segmentation stage's cortex output; the
        // reverse order (or parcellation alone) is not a valid pipeline.
        if (s.task == "parcellation" && !seen_segmentation)
            throw ManifestError("manifest: parcellation stage requires a prior segmentation stage");
    }
}

struct ArtifactRecord {
    std::string path;
    std::uint64_t hash;
};

struct StageRecord {
    std::string subject;
    std::string stage;
    std::string status;  // ok | failed | skipped
    double seconds = 0;
    std::vector<ArtifactRecord> artifacts;
    std::string error;
};

struct RunReport {
    std::vector<StageRecord> records;
    std::size_t subjects_ok = 0;
    std::size_t subjects_failed = 0;

    int exit_code() const {
        if (subjects_failed == 0) return 0;
        return 2;
    }
};

inline std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot hash missing file: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
        std::streamsize n = f.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<std::uint8_t>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!f) break;
    }
    return h;
}

namespace pipeline_detail {

// Resolves "@input.key" (subject input) and "@stage.output" (prior artifact)
// path references; anything else is a literal path.
inline std::string resolve_ref(const std::string& ref, const SubjectSpec& subject,
                               const std::map<std::string, std::map<std::string, std::string>>& outputs) {
    if (ref.rfind("@input.", 0) == 0) {
        std::string key = ref.substr(7);
        auto it = subject.inputs.find(key);
        if (it == subject.inputs.end())
            throw std::runtime_error("subject " + subject.id + " has no input '" + key + "'");
        return it->second;
    }
    if (!ref.empty() && ref[0] == '@') {
        auto dot = ref.find('.', 1);
        if (dot == std::string::npos) throw std::runtime_error("bad reference: " + ref);
        std::string stage = ref.substr(1, dot - 1), out = ref.substr(dot + 1);
        auto sit = outputs.find(stage);
        if (sit == outputs.end()) throw std::runtime_error("reference to unknown stage: " + stage);
        auto oit = sit->second.find(out);
        if (oit == sit->second.end())
            throw std::runtime_error("stage " + stage + " has no output '" + out + "'");
        return oit->second;
    }
    return ref;
}

inline std::string substitute(std::string tmpl, const std::map<std::string, std::string>& vars) {
    for (const auto& [k, v] : vars) {
        std::string pat = "{" + k + "}";
        std::size_t pos;
        while ((pos = tmpl.find(pat)) != std::string::npos) tmpl.replace(pos, pat.size(), v);
    }
    return tmpl;
}

}  // namespace pipeline_detail

// Runs one stage for one subject. Outputs land under
// output_root/<subject>/<stage>/.
inline StageRecord run_stage(const PipelineManifest& manifest, const SubjectSpec& subject,
                             const StageConfig& stage,
                             std::map<std::string, std::map<std::string, std::string>>& outputs) {
    namespace fsys = std::filesystem;
    using pipeline_detail::resolve_ref;
    StageRecord rec{subject.id, stage.name, "ok", 0, {}, {}};
    auto t0 = std::chrono::steady_clock::now();
    fsys::path dir = fsys::path(manifest.output_root) / subject.id / stage.name;
    fsys::create_directories(dir);
    auto out_path = [&](const std::string& f) { return (dir / f).string(); };
    auto ref = [&](const std::string& key) {
        return resolve_ref(stage.params.at(key).get<std::string>(), subject, outputs);
    };
    auto publish = [&](const std::string& key, const std::string& path) {
        outputs[stage.name][key] = path;
        rec.artifacts.push_back({path, fnv1a64_file(path)});
    };

    try {
        if (stage.type == "prep-labels") {
            LabelMap labels{load_nifti(ref("labels")), fs35(), 0};
            VoxelGrid mask = load_nifti(ref("mask"));
            LabelMap prepped = relabel_unassigned_to_csf(labels, mask);
            std::string p = out_path("labels.nii.gz");
            save_nifti(prepped.grid, p, true);
            publish("labels", p);
        } else if (stage.type == "extract-cortex") {
            LabelMap labels{load_nifti(ref("labels")), fs35(), 0};
            auto [cortex, parc] = extract_cortex(labels);
            std::string pc = out_path("cortex.nii.gz"), pp = out_path("parcellation.nii.gz");
            save_nifti(cortex.grid, pc, true);
            save_nifti(parc.grid, pp, true);
            publish("cortex", pc);
            publish("parcellation", pp);
        } else if (stage.type == "resample") {
            VoxelGrid in = load_nifti(ref("input"));
            ResampleSpec spec;
            if (stage.params.contains("target_spacing")) {
                auto ts = stage.params.at("target_spacing").get<std::vector<double>>();
                spec = ResampleSpec::to_spacing({ts.at(0), ts.at(1), ts.at(2)});
            } else {
                spec = ResampleSpec::like(load_nifti(ref("like")));
            }
            bool is_labels = stage.params.value("labels", false);
            std::string p = out_path(is_labels ? "labels.nii.gz" : "image.nii.gz");
            if (is_labels) {
                LabelMap lm{std::move(in), fs35(), 0};
                save_nifti(resample_labels(lm, spec).grid, p, true);
            } else {
                save_nifti(resample_image(in, spec), p, true);
            }
            publish("out", p);
        } else if (stage.type == "eval") {
            LabelMap gt{load_nifti(ref("gt")), fs35(), 0};
            LabelMap pred{load_nifti(ref("pred")), fs35(), 0};
            std::string mode = stage.params.value("mode", std::string("whole-brain"));
            ExclusionSet excl = evaluation_label_set(mode == "cortex" ? EvalMode::Cortex
                                                                      : EvalMode::WholeBrain);
            if (mode == "cortex") {
                gt.convention = dkt62();
                pred.convention = dkt62();
            }
            MetricsReport rep = evaluate_pair(gt, pred, excl);
            std::string p = out_path("metrics.csv");
            std::ofstream f(p);
            f << "subject_id,label_id,label_name,dsc,asd_mm,g_voxels,p_voxels\n";
            for (const auto& m : rep.per_label) {
                f << subject.id << ',' << m.label_id << ',' << m.label_name << ',' << m.dsc << ',';
                if (!std::isnan(m.asd_mm)) f << m.asd_mm;
                f << ',' << m.g_voxels << ',' << m.p_voxels << "\n";
            }
            f << subject.id << ",,median," << rep.median_dsc << ',' << rep.median_asd << ",,\n";
            f.close();
            publish("metrics", p);
        } else if (stage.type == "volumetry") {
            LabelMap labels{load_nifti(ref("labels")), fs35(), 0};
            VolumeReport rep = normalize_by_tiv(structure_volumes(labels, subject.id));
            std::string p = out_path("volumes.csv");
            std::ofstream f(p);
            f << "subject_id,label_id,name,voxels,volume_mm3,normalized\n";
            for (const auto& r : rep.rows)
                f << subject.id << ',' << r.label_id << ',' << r.name << ',' << r.voxels << ','
                  << r.volume_mm3 << ',' << r.normalized << "\n";
            f << subject.id << ",,tiv,," << rep.tiv_mm3 << ",\n";
            f.close();
            publish("volumes", p);
        } else if (stage.type == "ensemble") {
            std::ifstream mf(ref("manifest"));
            if (!mf) throw std::runtime_error("cannot open fold manifest");
            nlohmann::json mj = nlohmann::json::parse(mf);
            auto folds = load_fold_manifest(mj, fsys::path(ref("manifest")).parent_path().string());
            LabelMap seg = average_and_argmax(folds, fs35());
            std::string p = out_path("seg.nii.gz");
            save_nifti(seg.grid, p, true);
            publish("seg", p);
        } else if (stage.type == "synth") {
            LabelMap input{load_nifti(ref("labels")), fs35(), 0};
            SynthConfig cfg = stage.params.value("config", nlohmann::json::object());
            cfg.seed = manifest.seed;
            std::vector<LabelMap> inputs{input};
            auto fails = generate_corpus(inputs, cfg, [&](SynthCase&& c) {
                std::string stem = "case_" + std::to_string(c.input_index) + "_" +
                                   std::to_string(c.rep_index);
                save_nifti(c.labels.grid, out_path(stem + "_labels.nii.gz"), true);
                if (c.image) save_nifti(*c.image, out_path(stem + "_image.nii.gz"), true);
                std::ofstream pf(out_path(stem + "_provenance.json"));
                pf << c.provenance.dump(2) << "\n";
            });
            if (!fails.empty()) throw std::runtime_error(fails.front().message);
            outputs[stage.name]["dir"] = dir.string();
            std::vector<std::string> produced;
            for (const auto& e : fsys::directory_iterator(dir)) produced.push_back(e.path().string());
            std::sort(produced.begin(), produced.end());
            for (const auto& p : produced) rec.artifacts.push_back({p, fnv1a64_file(p)});
        } else if (stage.type == "exec") {
            std::map<std::string, std::string> vars{{"subject", subject.id},
                                                    {"outdir", dir.string()}};
            if (stage.params.contains("inputs"))
                for (auto it = stage.params.at("inputs").begin();
                     it != stage.params.at("inputs").end(); ++it)
                    vars["in:" + it.key()] =
                        resolve_ref(it.value().get<std::string>(), subject, outputs);
            std::string cmd =
                pipeline_detail::substitute(stage.params.at("command").get<std::string>(), vars);
            int rc = std::system(cmd.c_str());
            if (rc != 0) throw std::runtime_error("exec stage command failed (exit " +
                                                  std::to_string(rc) + ")");
            if (stage.params.contains("outputs"))
                for (auto it = stage.params.at("outputs").begin();
                     it != stage.params.at("outputs").end(); ++it) {
                    std::string p = (dir / it.value().get<std::string>()).string();
                    publish(it.key(), p);
                }
        } else {
            throw std::runtime_error("unknown stage type: " + stage.type);
        }
    } catch (const std::exception& e) {
        rec.status = "failed";
        rec.error = e.what();
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

// Executes every stage per subject; subjects run in a worker pool, stages
// within a subject sequentially. A failing subject never affects another.
inline RunReport run_pipeline(const PipelineManifest& manifest, int jobs = 1) {
    manifest.validate();
    RunReport report;
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::vector<std::vector<StageRecord>> per_subject(manifest.subjects.size());

    auto worker = [&] {
        for (;;) {
            std::size_t si = next.fetch_add(1);
            if (si >= manifest.subjects.size()) return;
            const SubjectSpec& subject = manifest.subjects[si];
            std::map<std::string, std::map<std::string, std::string>> outputs;
            bool failed = false;
            for (const auto& stage : manifest.stages) {
                if (failed) {
                    per_subject[si].push_back({subject.id, stage.name, "skipped", 0, {}, {}});
                    continue;
                }
                StageRecord rec = run_stage(manifest, subject, stage, outputs);
                failed = rec.status == "failed";
                per_subject[si].push_back(std::move(rec));
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
    for (auto& recs : per_subject) {
        bool ok = true;
        for (auto& r : recs) {
            if (r.status == "failed") ok = false;
            report.records.push_back(std::move(r));
        }
        if (ok) ++report.subjects_ok;
        else ++report.subjects_failed;
    }
    return report;
}

inline void write_run_report_jsonl(const RunReport& report, const std::string& path) {
    std::ofstream f(path);
    for (const auto& r : report.records) {
        nlohmann::json j{{"subject", r.subject},
                         {"stage", r.stage},
                         {"status", r.status},
                         {"seconds", r.seconds}};
        nlohmann::json arts = nlohmann::json::array();
        for (const auto& a : r.artifacts)
            arts.push_back({{"path", a.path}, {"fnv1a64", a.hash}});
        j["artifacts"] = arts;
        if (!r.error.empty()) j["error"] = r.error;
        f << j.dump() << "\n";
    }
}

}  // namespace uhfseg
