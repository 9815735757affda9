#include "ewm/csv.hpp"
#include "ewm/dataset.hpp"
#include "ewm/errors.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace ewm;

namespace {

const char* kSix =
    "id,arm,choice,y_treat,y_base,age,size\n"
    "a,NT,NT,10,11,30,2\n"
    "b,nt,nt,12,12,40,3\n"
    "c,T,T,8,10,50,1\n"
    "d,t,T,9,9.5,60,4\n"
    "e,O,T,7,8,35,2\n"
    "f,O,NT,11,11,45,5\n";

} // namespace

TEST_CASE("csv parser handles quotes, blank lines and a BOM") {
    const auto t = csv::parse("\xEF\xBB\xBFh1,h2\n\"a,b\",\"say \"\"hi\"\"\"\n\n1,2\n");
    CHECK(t.header == std::vector<std::string>{"h1", "h2"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][0] == "a,b");
    CHECK(t.rows[0][1] == "say \"hi\"");
    CHECK(t.line_numbers[1] == 4);
    CHECK_THROWS_AS(csv::parse("a,b\n1\n"), DataError);
    CHECK(csv::to_double("1e3").value() == 1000.0);
    CHECK_FALSE(csv::to_double("1.5x"));
    CHECK_FALSE(csv::to_double(""));
}

TEST_CASE("load counts arms and parses tokens case-insensitively") {
    const auto res = parse_csv(kSix, {"age", "size"});
    const auto& ds = res.data;
    CHECK(ds.size() == 6);
    CHECK(ds.arm_counts() == PerArm<std::size_t>{2, 2, 2});
    CHECK(ds.arm(1) == Arm::NT);
    CHECK(ds.choice(4) == Choice::T);
    CHECK(ds.x(2, 0) == 50.0);
    CHECK(res.warnings.empty());
}

TEST_CASE("reordered covariate columns give the canonical dataset") {
    const char* swapped =
        "size,id,y_base,arm,choice,y_treat,age\n"
        "2,a,11,NT,NT,10,30\n"
        "3,b,12,NT,NT,12,40\n"
        "1,c,10,T,T,8,50\n"
        "4,d,9.5,T,T,9,60\n"
        "2,e,8,O,T,7,35\n"
        "5,f,11,O,NT,11,45\n";
    // hand-built expectation
    std::vector<Household> rows{
        {"a", {30, 2}, Arm::NT, Choice::NT, 10, 11}, {"b", {40, 3}, Arm::NT, Choice::NT, 12, 12},
        {"c", {50, 1}, Arm::T, Choice::T, 8, 10},    {"d", {60, 4}, Arm::T, Choice::T, 9, 9.5},
        {"e", {35, 2}, Arm::O, Choice::T, 7, 8},     {"f", {45, 5}, Arm::O, Choice::NT, 11, 11},
    };
    const RctDataset expected({"age", "size"}, rows);
    CHECK(parse_csv(swapped, {"age", "size"}).data == expected);
    CHECK(parse_csv(kSix, {"age", "size"}).data == expected);
}

TEST_CASE("invalid rows are rejected with the row id") {
    const char* bad = "id,arm,choice,y_treat,y_base,x\nok,NT,NT,1,1,0\nrow42,T,NT,1,1,0\n";
    try {
        parse_csv(bad, {"x"});
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("row42") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_csv("id,arm,choice,y_treat,y_base\n", {}), DataError);
    CHECK_THROWS_AS(parse_csv("", {}), DataError);
    CHECK_THROWS_AS(parse_csv("id,arm,choice,y_treat,x\na,NT,NT,1,0\n", {"x"}), DataError);
    CHECK_THROWS_AS(parse_csv("id,arm,choice,y_treat,y_base,x\na,NT,NT,abc,1,0\n", {"x"}), DataError);
    CHECK_THROWS_AS(parse_csv("id,arm,choice,y_treat,y_base,x\na,NT,NT,,1,0\n", {"x"}), DataError);
    CHECK_THROWS_AS(parse_csv("id,arm,choice,y_treat,y_base,x\na,X,NT,1,1,0\n", {"x"}), DataError);
    CHECK_THROWS_AS(parse_csv("id,arm,choice,y_treat,y_base,x\na,NT,T,1,1,0\n", {"x"}), DataError);
    CHECK_THROWS_AS(parse_csv("id,arm,choice,y_treat,y_base,x\na,NT,NT,-1,1,0\n", {"x"}), DataError);
    CHECK_THROWS_AS(parse_csv("id,arm,choice,y_treat,y_base,x\na,NT,NT,1,1,inf\n", {"x"}), DataError);
    CHECK_THROWS_AS(parse_csv("id,arm,choice,y_treat,y_base,x\n", {"x"}), DataError);
}

TEST_CASE("extra columns warn, zero baseline is accepted") {
    const auto res = parse_csv("id,arm,choice,y_treat,y_base,x,note\na,O,T,1,0,0.5,hello\n", {"x"});
    CHECK(res.warnings.size() == 1);
    CHECK(res.data.y_base(0) == 0.0);
}

TEST_CASE("csv round trip is lossless") {
    const auto ds = parse_csv(kSix, {"age", "size"}).data;
    const auto again = parse_csv(to_csv(ds), {"age", "size"}).data;
    CHECK(again == ds);
    const auto path = std::filesystem::temp_directory_path() / "ewm_roundtrip.csv";
    write_csv(ds, path);
    CHECK(load_csv(path, {"age", "size"}).data == ds);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", {}), DataError);
}

TEST_CASE("sample propensities") {
    const auto ds = parse_csv(kSix, {"age", "size"}).data;
    const auto p = sample_propensities(ds);
    for (double v : p) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    // Counts from the field experiment: 1,577 NT, 1,486 T, 807 O.
    std::vector<Household> rows;
    const std::array<std::pair<Arm, int>, 3> counts{{{Arm::NT, 1577}, {Arm::T, 1486}, {Arm::O, 807}}};
    for (auto [arm, c] : counts)
        for (int i = 0; i < c; ++i)
            rows.push_back({std::to_string(rows.size()), {0.0}, arm,
                            arm == Arm::T ? Choice::T : Choice::NT, 1.0, 1.0});
    const RctDataset big({"x"}, rows);
    const auto q = sample_propensities(big);
    CHECK(q[0] == doctest::Approx(0.40749).epsilon(1e-5));
    CHECK(q[1] == doctest::Approx(0.38398).epsilon(1e-5));
    CHECK(q[2] == doctest::Approx(0.20852).epsilon(1e-5));
    CHECK(q[0] + q[1] + q[2] == doctest::Approx(1.0).epsilon(1e-15));

    std::vector<Household> no_t{{"a", {0}, Arm::NT, Choice::NT, 1, 1}, {"b", {0}, Arm::O, Choice::T, 1, 1}};
    CHECK_THROWS_AS(sample_propensities(RctDataset({"x"}, no_t)), NumericError);
}

TEST_CASE("arm tokens") {
    CHECK(parse_arm("o") == Arm::O);
    CHECK(parse_arm("Nt") == Arm::NT);
    CHECK_FALSE(parse_arm("TT"));
    CHECK_FALSE(parse_choice("O"));
    CHECK(Arm::NT < Arm::T);
    CHECK(Arm::T < Arm::O);
}
