#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "uhfsegkit/volumetry.hpp"

using namespace uhfseg;

TEST_CASE("volume is voxel count times voxel volume") {
    LabelMap lm = testutil::make_label_map({8, 8, 8}, 0.8);
    for (int i = 0; i < 10; ++i) lm.grid.mutable_data()[i] = 17;
    VolumeReport rep = structure_volumes(lm, "s1");
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.rows[0].label_id == 17);
    CHECK(rep.rows[0].voxels == 10);
    CHECK(rep.rows[0].volume_mm3 == Catch::Approx(10 * 0.8 * 0.8 * 0.8).epsilon(1e-12));
    CHECK(rep.tiv_mm3 == rep.rows[0].volume_mm3);
}

TEST_CASE("anisotropic spacing uses the product of components") {
    LabelMap lm{VoxelGrid::zeros({4, 4, 4}, Affine::diagonal({0.5, 1.0, 2.0}),
                                 DataType::UInt16),
                fs35(), 0};
    lm.grid.at(0, 0, 0) = 2;
    lm.grid.at(1, 0, 0) = 2;
    VolumeReport rep = structure_volumes(lm);
    CHECK(rep.rows[0].volume_mm3 == Catch::Approx(2 * 0.5 * 1.0 * 2.0).epsilon(1e-12));
}

TEST_CASE("tiv is additive over disjoint structures") {
    LabelMap lm = testutil::make_label_map({6, 6, 6});
    testutil::fill_box(lm.grid, {0, 0, 0}, {2, 2, 2}, 2);    // 8 voxels
    testutil::fill_box(lm.grid, {3, 3, 3}, {6, 6, 6}, 41);   // 27 voxels
    VolumeReport rep = structure_volumes(lm);
    REQUIRE(rep.rows.size() == 2);
    double sum = 0;
    for (const auto& r : rep.rows) sum += r.volume_mm3;
    CHECK(rep.tiv_mm3 == sum);
    CHECK(rep.tiv_mm3 == 35.0);
}

TEST_CASE("background never contributes to the report") {
    LabelMap lm = testutil::make_label_map({4, 4, 4});
    VolumeReport rep = structure_volumes(lm);
    CHECK(rep.rows.empty());
    CHECK(rep.tiv_mm3 == 0.0);
}

TEST_CASE("normalization divides by TIV") {
    LabelMap lm = testutil::make_label_map({6, 6, 6});
    testutil::fill_box(lm.grid, {0, 0, 0}, {2, 2, 2}, 2);
    testutil::fill_box(lm.grid, {3, 3, 3}, {6, 6, 6}, 41);
    VolumeReport rep = normalize_by_tiv(structure_volumes(lm));
    double sum = 0;
    for (const auto& r : rep.rows) {
        CHECK(r.normalized == Catch::Approx(r.volume_mm3 / rep.tiv_mm3).margin(1e-12));
        sum += r.normalized;
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("external TIV override replaces the internal sum") {
    LabelMap lm = testutil::make_label_map({4, 4, 4});
    testutil::fill_box(lm.grid, {0, 0, 0}, {2, 2, 2}, 17);  // 8 mm^3
    VolumeReport rep = normalize_by_tiv(structure_volumes(lm), 1600.0);
    REQUIRE(rep.tiv_override_mm3.has_value());
    CHECK(*rep.tiv_override_mm3 == 1600.0);
    CHECK(rep.rows[0].normalized == Catch::Approx(8.0 / 1600.0).margin(1e-12));
}

TEST_CASE("non-positive TIV is rejected") {
    LabelMap lm = testutil::make_label_map({4, 4, 4});
    CHECK_THROWS(normalize_by_tiv(structure_volumes(lm)));          // empty -> tiv 0
    lm.grid.at(0, 0, 0) = 2;
    CHECK_THROWS(normalize_by_tiv(structure_volumes(lm), -5.0));
}

TEST_CASE("tiv_compare recovers a known linear relation") {
    std::vector<std::pair<std::string, double>> ours, ref;
    for (int i = 0; i < 6; ++i) {
        double x = 1200.0 + 50.0 * i;
        ref.emplace_back("s" + std::to_string(i), x);
        ours.emplace_back("s" + std::to_string(i), 1.1 * x + 30.0);
    }
    TivComparison cmp = tiv_compare(ours, ref);
    CHECK(cmp.rows.size() == 6);
    CHECK(cmp.pearson_r == Catch::Approx(1.0).margin(1e-12));
    CHECK(cmp.slope == Catch::Approx(1.1).margin(1e-9));
    CHECK(cmp.intercept == Catch::Approx(30.0).margin(1e-6));
}

TEST_CASE("tiv_compare matches subjects by id and ignores the rest") {
    std::vector<std::pair<std::string, double>> ours{{"a", 1.0}, {"b", 2.0}, {"c", 3.0},
                                                     {"zzz", 99.0}};
    std::vector<std::pair<std::string, double>> ref{{"c", 3.1}, {"a", 0.9}, {"b", 2.2},
                                                    {"unmatched", 5.0}};
    TivComparison cmp = tiv_compare(ours, ref);
    CHECK(cmp.rows.size() == 3);
    for (const auto& r : cmp.rows) CHECK(r.subject != "zzz");
}

TEST_CASE("tiv_compare needs at least three matched subjects") {
    std::vector<std::pair<std::string, double>> ours{{"a", 1.0}, {"b", 2.0}};
    std::vector<std::pair<std::string, double>> ref{{"a", 1.0}, {"b", 2.0}};
    CHECK_THROWS(tiv_compare(ours, ref));
}

TEST_CASE("tiv_compare rejects zero-variance series") {
    std::vector<std::pair<std::string, double>> ours{{"a", 5.0}, {"b", 5.0}, {"c", 5.0}};
    std::vector<std::pair<std::string, double>> ref{{"a", 1.0}, {"b", 2.0}, {"c", 3.0}};
    CHECK_THROWS(tiv_compare(ours, ref));
}
