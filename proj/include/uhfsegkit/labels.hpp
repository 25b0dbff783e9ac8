#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "uhfsegkit/voxel_grid.hpp"

namespace uhfseg {

enum class Hemisphere { Left, Right, None };

struct LabelEntry {
    int id;
    std::string name;
    Hemisphere hemi;
};

// FreeSurfer lookup-table ids used throughout.
namespace fs {
constexpr int LeftCerebralWM = 2;
constexpr int LeftCortex = 3;
constexpr int LeftLateralVentricle = 4;
constexpr int LeftInfLatVent = 5;
constexpr int CSF = 24;
constexpr int LeftChoroidPlexus = 31;
constexpr int RightCerebralWM = 41;
constexpr int RightCortex = 42;
constexpr int RightLateralVentricle = 43;
constexpr int RightInfLatVent = 44;
constexpr int RightChoroidPlexus = 63;
constexpr int WMHypointensities = 77;
}  // namespace fs

class LabelConvention {
public:
    LabelConvention() = default;
    LabelConvention(std::string name, std::vector<LabelEntry> entries)
        : name_(std::move(name)), entries_(std::move(entries)) {
        for (const auto& e : entries_) {
            if (!by_id_.emplace(e.id, &e).second)
                throw std::invalid_argument("LabelConvention: duplicate id " + std::to_string(e.id));
            if (e.id == 0)
                throw std::invalid_argument("LabelConvention: background id 0 may not be an entry");
        }
    }
    LabelConvention(const LabelConvention& o) : LabelConvention(o.name_, o.entries_) {}
    LabelConvention& operator=(const LabelConvention& o) {
        LabelConvention tmp(o);
        std::swap(name_, tmp.name_);
        std::swap(entries_, tmp.entries_);
        std::swap(by_id_, tmp.by_id_);
        return *this;
    }

    const std::string& name() const { return name_; }
    const std::vector<LabelEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool contains(int id) const { return by_id_.count(id) > 0; }
    const LabelEntry* find(int id) const {
        auto it = by_id_.find(id);
        return it == by_id_.end() ? nullptr : it->second;
    }
    std::set<int> ids() const {
        std::set<int> s;
        for (const auto& e : entries_) s.insert(e.id);
        return s;
    }

private:
    std::string name_;
    std::vector<LabelEntry> entries_;
    std::map<int, const LabelEntry*> by_id_;
};

namespace conventions_detail {

// The 31 DKT cortical regions per hemisphere (aparc.DKTatlas order, ids are
// FreeSurfer ctx-lh-* 1000-offset / ctx-rh-* 2000-offset).
inline const std::vector<std::pair<int, const char*>>& dkt_regions() {
    static const std::vector<std::pair<int, const char*>> r = {
        {2, "caudalanteriorcingulate"},
        {3, "caudalmiddlefrontal"},
        {5, "cuneus"},
        {6, "entorhinal"},
        {7, "fusiform"},
        {8, "inferiorparietal"},
        {9, "inferiortemporal"},
        {10, "isthmuscingulate"},
        {11, "lateraloccipital"},
        {12, "lateralorbitofrontal"},
        {13, "lingual"},
        {14, "medialorbitofrontal"},
        {15, "middletemporal"},
        {16, "parahippocampal"},
        {17, "paracentral"},
        {18, "parsopercularis"},
        {19, "parsorbitalis"},
        {20, "parstriangularis"},
        {21, "pericalcarine"},
        {22, "postcentral"},
        {23, "posteriorcingulate"},
        {24, "precentral"},
        {25, "precuneus"},
        {26, "rostralanteriorcingulate"},
        {27, "rostralmiddlefrontal"},
        {28, "superiorfrontal"},
        {29, "superiorparietal"},
        {30, "superiortemporal"},
        {31, "supramarginal"},
        {34, "transversetemporal"},
        {35, "insula"},
    };
    return r;
}

// The 3 Desikan-Killiany regions per hemisphere absent from DKT.
inline const std::vector<std::pair<int, const char*>>& dk_only_regions() {
    static const std::vector<std::pair<int, const char*>> r = {
        {1, "bankssts"},
        {32, "frontalpole"},
        {33, "temporalpole"},
    };
    return r;
}

}  // namespace conventions_detail

// Whole-brain segmentation convention: 35 labels (15 per hemisphere + 5 midline).
inline const LabelConvention& fs35() {
    static const LabelConvention c = [] {
        std::vector<LabelEntry> e;
        // left id, right id, name; right-hemisphere ids follow the FreeSurfer
        // lookup table and are not a constant offset from the left ids
        const std::tuple<int, int, const char*> regions[] = {
            {2, 41, "cerebral-white-matter"}, {3, 42, "cerebral-cortex"},
            {4, 43, "lateral-ventricle"},     {5, 44, "inf-lat-vent"},
            {7, 46, "cerebellum-white-matter"}, {8, 47, "cerebellum-cortex"},
            {10, 49, "thalamus"},             {11, 50, "caudate"},
            {12, 51, "putamen"},              {13, 52, "pallidum"},
            {17, 53, "hippocampus"},          {18, 54, "amygdala"},
            {26, 58, "accumbens-area"},       {28, 60, "ventraldc"},
            {31, 63, "choroid-plexus"},
        };
        for (auto [lid, rid, nm] : regions)
            e.push_back({lid, std::string("left-") + nm, Hemisphere::Left});
        for (auto [lid, rid, nm] : regions)
            e.push_back({rid, std::string("right-") + nm, Hemisphere::Right});
        e.push_back({14, "3rd-ventricle", Hemisphere::None});
        e.push_back({15, "4th-ventricle", Hemisphere::None});
        e.push_back({16, "brain-stem", Hemisphere::None});
        e.push_back({24, "csf", Hemisphere::None});
        e.push_back({77, "wm-hypointensities", Hemisphere::None});
        return LabelConvention("FS35", std::move(e));
    }();
    return c;
}

// DKT cortical parcellation, 62 labels (31 per hemisphere).
inline const LabelConvention& dkt62() {
    static const LabelConvention c = [] {
        std::vector<LabelEntry> e;
        for (auto [id, nm] : conventions_detail::dkt_regions())
            e.push_back({1000 + id, std::string("ctx-lh-") + nm, Hemisphere::Left});
        for (auto [id, nm] : conventions_detail::dkt_regions())
            e.push_back({2000 + id, std::string("ctx-rh-") + nm, Hemisphere::Right});
        return LabelConvention("DKT62", std::move(e));
    }();
    return c;
}

// Desikan-Killiany cortical parcellation, 68 labels (34 per hemisphere).
inline const LabelConvention& dk68() {
    static const LabelConvention c = [] {
        auto all = conventions_detail::dkt_regions();
        for (auto p : conventions_detail::dk_only_regions()) all.push_back(p);
        std::sort(all.begin(), all.end());
        std::vector<LabelEntry> e;
        for (auto [id, nm] : all) e.push_back({1000 + id, std::string("ctx-lh-") + nm, Hemisphere::Left});
        for (auto [id, nm] : all) e.push_back({2000 + id, std::string("ctx-rh-") + nm, Hemisphere::Right});
        return LabelConvention("DK68", std::move(e));
    }();
    return c;
}

inline const LabelConvention& convention_by_name(const std::string& name) {
    if (name == "FS35") return fs35();
    if (name == "DKT62") return dkt62();
    if (name == "DK68") return dk68();
    throw std::invalid_argument("unknown label convention: " + name);
}

// Integer voxel grid tagged with its labeling convention. Background is 0.
struct LabelMap {
    VoxelGrid grid;
    LabelConvention convention;
    int background_id = 0;

    int label_at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return static_cast<int>(grid.at(i, j, k));
    }

    std::set<int> present_ids() const {
        std::set<int> s;
        for (double v : grid.data()) {
            int id = static_cast<int>(v);
            if (id != background_id) s.insert(id);
        }
        return s;
    }

    // Checks that every nonzero voxel value appears in the convention.
    void validate() const {
        for (int id : present_ids())
            if (!convention.contains(id))
                throw std::runtime_error("LabelMap: id " + std::to_string(id) +
                                         " not in convention " + convention.name());
    }
};

struct ExclusionSet {
    std::set<int> excluded_ids;
    std::string reason;
};

enum class EvalMode { WholeBrain, Cortex };

// Assign the CSF label to every in-mask voxel that carries no label. No
// dilation is applied.
inline LabelMap relabel_unassigned_to_csf(const LabelMap& labels, const VoxelGrid& brain_mask,
                                          int csf_id = fs::CSF) {
    if (!labels.grid.same_geometry(brain_mask))
        throw std::invalid_argument("relabel_unassigned_to_csf: labels and mask grids differ");
    if (!labels.convention.contains(csf_id))
        throw std::invalid_argument("relabel_unassigned_to_csf: CSF id " + std::to_string(csf_id) +
                                    " absent from convention");
    LabelMap out = labels;
    auto& d = out.grid.mutable_data();
    const auto& m = brain_mask.data();
    for (std::size_t i = 0; i < d.size(); ++i)
        if (m[i] != 0.0 && static_cast<int>(d[i]) == labels.background_id)
            d[i] = csf_id;
    return out;
}

// Split a whole-brain map carrying cortex voxels (plain 3/42 or DKT parcel
// ids) into a two-label cortex mask and its parcellation. Both outputs share
// the same voxel support; parcel ids are kept where present, otherwise the
// generic hemisphere cortex id passes through.
inline std::pair<LabelMap, LabelMap> extract_cortex(const LabelMap& labels) {
    const LabelConvention& parc = dkt62();
    LabelMap cortex{VoxelGrid::zeros(labels.grid.dims(), labels.grid.affine(), DataType::UInt8),
                    LabelConvention("CortexLR",
                                    {{fs::LeftCortex, "left-cerebral-cortex", Hemisphere::Left},
                                     {fs::RightCortex, "right-cerebral-cortex", Hemisphere::Right}}),
                    0};
    LabelMap parcellation{VoxelGrid::zeros(labels.grid.dims(), labels.grid.affine(), DataType::UInt16),
                          parc, 0};
    std::size_t found = 0;
    auto& cd = cortex.grid.mutable_data();
    auto& pd = parcellation.grid.mutable_data();
    const auto& src = labels.grid.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        int id = static_cast<int>(src[i]);
        bool left = id == fs::LeftCortex || (id > 1000 && id < 2000 && parc.contains(id));
        bool right = id == fs::RightCortex || (id > 2000 && id < 3000 && parc.contains(id));
        if (!left && !right) continue;
        ++found;
        cd[i] = left ? fs::LeftCortex : fs::RightCortex;
        pd[i] = id;
    }
    if (found == 0) throw std::runtime_error("extract_cortex: no cortex labels present");
    return {std::move(cortex), std::move(parcellation)};
}

// Default DKT exclusion for cortex-mode evaluation. The regions most affected
// by the DK/DKT protocol difference (neighbors of bankssts, frontal pole and
// temporal pole, which DKT reassigns): configurable, printed on every run.
inline const std::set<int>& default_cortex_exclusions() {
    static const std::set<int> s = {
        1006, 2006,  // entorhinal (absorbs temporal pole territory)
        1015, 2015,  // middletemporal
        1027, 2027,  // rostralmiddlefrontal (absorbs frontal pole territory)
        1028, 2028,  // superiorfrontal
        1030, 2030,  // superiortemporal (absorbs banks-sts territory)
    };
    return s;
}

inline ExclusionSet evaluation_label_set(EvalMode mode,
                                         const std::set<int>* override_ids = nullptr) {
    if (override_ids) return {*override_ids, "user override"};
    switch (mode) {
        case EvalMode::WholeBrain:
            return {{fs::LeftChoroidPlexus, fs::RightChoroidPlexus, fs::WMHypointensities,
                     fs::LeftLateralVentricle, fs::RightLateralVentricle, fs::LeftInfLatVent,
                     fs::RightInfLatVent, fs::CSF},
                    "choroid plexus, WM-hypointensities, lateral/inferior-lateral ventricles, CSF"};
        case EvalMode::Cortex:
            return {default_cortex_exclusions(), "DK/DKT convention mismatch regions"};
    }
    throw std::invalid_argument("evaluation_label_set: unknown mode");
}

struct MapConventionResult {
    LabelMap map;
    std::size_t dropped_voxels = 0;      // voxels whose id had no table entry
    std::set<int> unmapped_ids;
};

// Relabel through an explicit id->id table. Ids absent from the table go to
// background and are counted.
inline MapConventionResult map_convention(const LabelMap& labels, const LabelConvention& target,
                                          const std::map<int, int>& table) {
    MapConventionResult res{LabelMap{labels.grid, target, labels.background_id}, 0, {}};
    auto& d = res.map.grid.mutable_data();
    for (double& v : d) {
        int id = static_cast<int>(v);
        if (id == labels.background_id) continue;
        auto it = table.find(id);
        int dst = labels.background_id;
        if (it == table.end()) {
            ++res.dropped_voxels;
            res.unmapped_ids.insert(id);
        } else {
            dst = it->second;
        }
        if (dst != labels.background_id && !target.contains(dst)) dst = labels.background_id;
        v = dst;
    }
    return res;
}

// CSV: id,name,hemisphere (hemisphere one of left/right/none). Header row
// optional.
inline LabelConvention load_convention_csv(const std::string& path, const std::string& name) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open convention file: " + path);
    std::vector<LabelEntry> entries;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string id_s, nm, hemi_s;
        std::getline(ss, id_s, ',');
        std::getline(ss, nm, ',');
        std::getline(ss, hemi_s, ',');
        if (id_s == "id") continue;
        Hemisphere h = Hemisphere::None;
        if (hemi_s == "left") h = Hemisphere::Left;
        else if (hemi_s == "right") h = Hemisphere::Right;
        entries.push_back({std::stoi(id_s), nm, h});
    }
    return LabelConvention(name, std::move(entries));
}

// CSV: src_id,dst_id. Header row optional.
inline std::map<int, int> load_mapping_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open mapping file: " + path);
    std::map<int, int> table;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string a, b;
        std::getline(ss, a, ',');
        std::getline(ss, b, ',');
        if (a == "src_id") continue;
        table[std::stoi(a)] = std::stoi(b);
    }
    return table;
}

}  // namespace uhfseg
