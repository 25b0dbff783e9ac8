#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "helpers.hpp"
#include "uhfsegkit/ensemble.hpp"

using namespace uhfseg;

namespace {

// one-hot stack for a label map over the given channel ids
ProbabilityStack one_hot_stack(const LabelMap& lm, const std::vector<int>& ids) {
    ProbabilityStack ps;
    ps.channel_ids = ids;
    for (int id : ids) {
        VoxelGrid g = VoxelGrid::zeros(lm.grid.dims(), lm.grid.affine(), DataType::Float32);
        for (std::size_t i = 0; i < g.size(); ++i)
            g.mutable_data()[i] = int(lm.grid.data()[i]) == id ? 1.0 : 0.0;
        ps.grids.push_back(std::move(g));
    }
    return ps;
}

ProbabilityStack constant_stack(Index3 dims, const std::vector<int>& ids,
                                const std::vector<double>& probs) {
    ProbabilityStack ps;
    ps.channel_ids = ids;
    for (double p : probs) {
        VoxelGrid g = VoxelGrid::zeros(dims, Affine::diagonal({1, 1, 1}), DataType::Float32);
        for (auto& v : g.mutable_data()) v = p;
        ps.grids.push_back(std::move(g));
    }
    return ps;
}

}  // namespace

TEST_CASE("five identical one-hot folds reproduce the label map exactly") {
    LabelMap lm = testutil::make_label_map({6, 6, 6});
    std::mt19937 rng(17);
    const int ids[] = {0, 2, 17, 41};
    for (auto& v : lm.grid.mutable_data()) v = ids[rng() % 4];

    ProbabilityStack ps = one_hot_stack(lm, {0, 2, 17, 41});
    std::vector<ProbabilityStack> folds(5, ps);
    LabelMap out = average_and_argmax(folds, fs35());
    CHECK(out.grid.data() == lm.grid.data());
}

TEST_CASE("mixed folds average before the argmax") {
    // folds (0.6, 0.4) x3 and (0.2, 0.8) x2 -> mean (0.44, 0.56) -> second id
    std::vector<ProbabilityStack> folds;
    for (int k = 0; k < 3; ++k) folds.push_back(constant_stack({2, 2, 2}, {3, 8}, {0.6, 0.4}));
    for (int k = 0; k < 2; ++k) folds.push_back(constant_stack({2, 2, 2}, {3, 8}, {0.2, 0.8}));
    LabelMap out = average_and_argmax(folds, fs35());
    for (double v : out.grid.data()) CHECK(int(v) == 8);
}

TEST_CASE("exact probability ties break to the smaller id") {
    std::vector<ProbabilityStack> folds{constant_stack({2, 2, 2}, {42, 7}, {0.5, 0.5})};
    LabelMap out = average_and_argmax(folds, fs35());
    for (double v : out.grid.data()) CHECK(int(v) == 7);
}

TEST_CASE("result is invariant under fold order") {
    std::mt19937 rng(23);
    Index3 dims{5, 5, 5};
    std::vector<int> ids{0, 2, 17};
    std::vector<ProbabilityStack> folds;
    for (int f = 0; f < 5; ++f) {
        ProbabilityStack ps;
        ps.channel_ids = ids;
        for (int c = 0; c < 3; ++c)
            ps.grids.push_back(VoxelGrid::zeros(dims, Affine::diagonal({1, 1, 1}),
                                                DataType::Float32));
        for (std::size_t i = 0; i < ps.grids[0].size(); ++i) {
            double a = std::uniform_real_distribution<>(0.01, 1)(rng);
            double b = std::uniform_real_distribution<>(0.01, 1)(rng);
            double c = std::uniform_real_distribution<>(0.01, 1)(rng);
            double s = a + b + c;
            ps.grids[0].mutable_data()[i] = a / s;
            ps.grids[1].mutable_data()[i] = b / s;
            ps.grids[2].mutable_data()[i] = c / s;
        }
        folds.push_back(std::move(ps));
    }
    LabelMap ref = average_and_argmax(folds, fs35());
    std::vector<std::size_t> perm{0, 1, 2, 3, 4};
    for (int trial = 0; trial < 20; ++trial) {
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<ProbabilityStack> shuffled;
        for (std::size_t k : perm) shuffled.push_back(folds[k]);
        LabelMap out = average_and_argmax(shuffled, fs35());
        CHECK(out.grid.data() == ref.grid.data());
    }
}

TEST_CASE("duplicating a fold k times does not change the result") {
    std::mt19937 rng(29);
    ProbabilityStack a = constant_stack({3, 3, 3}, {0, 5}, {0.3, 0.7});
    ProbabilityStack b = constant_stack({3, 3, 3}, {0, 5}, {0.9, 0.1});
    // one a + one b vs three a + three b: same mean
    LabelMap r1 = average_and_argmax({a, b}, fs35());
    LabelMap r2 = average_and_argmax({a, a, a, b, b, b}, fs35());
    CHECK(r1.grid.data() == r2.grid.data());
}

TEST_CASE("per-fold renormalization happens before averaging") {
    // fold 1 sums to 1.0004 per voxel (within the drift tolerance); after
    // renormalization its vote is exactly (0.5002, 0.5002)/1.0004 = (0.5, 0.5)
    ProbabilityStack drift = constant_stack({2, 2, 2}, {3, 9}, {0.5002, 0.5002});
    ProbabilityStack clean = constant_stack({2, 2, 2}, {3, 9}, {0.4, 0.6});
    LabelMap out = average_and_argmax({drift, clean}, fs35());
    // mean = ((0.5, 0.5) + (0.4, 0.6)) / 2 = (0.45, 0.55) -> id 9
    for (double v : out.grid.data()) CHECK(int(v) == 9);
}

TEST_CASE("stack validation rejects bad inputs") {
    SECTION("out-of-range probabilities") {
        ProbabilityStack ps = constant_stack({2, 2, 2}, {0, 1}, {1.4, -0.4});
        CHECK_THROWS(ps.validate());
    }
    SECTION("channel sums outside the drift tolerance") {
        ProbabilityStack ps = constant_stack({2, 2, 2}, {0, 1}, {0.5, 0.6});
        CHECK_THROWS(ps.validate());
    }
    SECTION("geometry mismatch between channels") {
        ProbabilityStack ps = constant_stack({2, 2, 2}, {0, 1}, {0.5, 0.5});
        ps.grids[1] = VoxelGrid::zeros({3, 2, 2}, Affine::diagonal({1, 1, 1}), DataType::Float32);
        for (auto& v : ps.grids[1].mutable_data()) v = 0.5;
        CHECK_THROWS(ps.validate());
    }
    SECTION("channel ids differ across folds") {
        ProbabilityStack a = constant_stack({2, 2, 2}, {0, 1}, {0.5, 0.5});
        ProbabilityStack b = constant_stack({2, 2, 2}, {0, 2}, {0.5, 0.5});
        CHECK_THROWS(average_and_argmax({a, b}, fs35()));
    }
    SECTION("fold geometry mismatch") {
        ProbabilityStack a = constant_stack({2, 2, 2}, {0, 1}, {0.5, 0.5});
        ProbabilityStack b = constant_stack({3, 2, 2}, {0, 1}, {0.5, 0.5});
        CHECK_THROWS(average_and_argmax({a, b}, fs35()));
    }
    SECTION("no folds") {
        CHECK_THROWS(average_and_argmax({}, fs35()));
    }
}

TEST_CASE("fold manifest loads channels from disk") {
    testutil::TempDir dir("ensemble_manifest");
    LabelMap lm = testutil::make_label_map({4, 4, 4});
    lm.grid.at(1, 1, 1) = 2;
    ProbabilityStack ps = one_hot_stack(lm, {0, 2});
    save_nifti(ps.grids[0], dir.file("f0_bg.nii.gz"));
    save_nifti(ps.grids[1], dir.file("f0_wm.nii.gz"));

    nlohmann::json manifest = {
        {"folds",
         {{{"channels",
            {{{"file", "f0_bg.nii.gz"}, {"label_id", 0}},
             {{"file", "f0_wm.nii.gz"}, {"label_id", 2}}}}}}}};
    auto folds = load_fold_manifest(manifest, dir.path().string());
    REQUIRE(folds.size() == 1);
    REQUIRE(folds[0].grids.size() == 2);
    CHECK(folds[0].channel_ids == std::vector<int>{0, 2});
    LabelMap out = average_and_argmax(folds, fs35());
    CHECK(out.grid.data() == lm.grid.data());
}
