#include "ewm/errors.hpp"
#include "ewm/welfare.hpp"

#include "helpers.hpp"

#include <doctest.h>

using namespace ewm;

namespace {

// n = 6, two rows per arm ordered NT,NT,T,T,O,O.
RctDataset six_rows() {
    std::vector<Household> rows;
    const Arm arms[] = {Arm::NT, Arm::NT, Arm::T, Arm::T, Arm::O, Arm::O};
    for (int i = 0; i < 6; ++i)
        rows.push_back({std::to_string(i), {static_cast<double>(i)}, arms[i],
                        arms[i] == Arm::T ? Choice::T : Choice::NT, 1.0, 1.0});
    return RctDataset({"x"}, rows);
}

WelfareOutcome outcome_of(std::vector<double> w) {
    WelfareOutcome o;
    o.w = std::move(w);
    return o;
}

} // namespace

TEST_CASE("welfare parameters from the capacity price") {
    const auto p = WelfareParams::from_capacity_price(25, 125, 291.1, 9425, 28);
    CHECK(p.delta == doctest::Approx(336.607142857).epsilon(1e-12));
    CHECK(p.kappa() == doctest::Approx(386.607142857).epsilon(1e-12));
    CHECK(p.outcome_coefficient() == doctest::Approx(-386.607142857).epsilon(1e-12));
    WelfareParams printed = p;
    printed.sign = SignConvention::ConsumptionPositive;
    CHECK(printed.outcome_coefficient() == doctest::Approx(286.607142857).epsilon(1e-12));
    CHECK(parse_sign_convention("paper_printed") == SignConvention::ConsumptionPositive);
    CHECK(parse_sign_convention("savings_positive") == SignConvention::SavingsPositive);
    CHECK_THROWS_AS(parse_sign_convention("other"), ConfigError);
    WelfareParams bad;
    bad.admin_cost = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("welfare of a single household") {
    const WelfareParams p = WelfareParams::from_capacity_price(25, 125, 291.1, 9425, 28);
    const std::vector<double> y{-1.0, 0.0, 0.0};
    const std::vector<Choice> z{Choice::T, Choice::NT, Choice::T};
    const auto w = welfare_from_outcome(y, z, p, false);
    CHECK(w[0] == doctest::Approx(95.5071).epsilon(1e-6));
    CHECK(w[1] == 0.0);
    CHECK(w[2] == doctest::Approx(-291.1));
    WelfareParams printed = p;
    printed.sign = SignConvention::ConsumptionPositive;
    CHECK(welfare_from_outcome(y, z, printed, false)[1] == 0.0);
}

TEST_CASE("the printed coefficient equals the savings form with delta negated") {
    // delta + (p - c)/2 == -(delta' + (c - p)/2) exactly when delta' = -delta
    for (double delta : {0.0, 1.5, 336.6071428571}) {
        WelfareParams printed;
        printed.delta = delta;
        printed.sign = SignConvention::ConsumptionPositive;
        WelfareParams savings;
        savings.delta = -delta;
        CHECK(savings.outcome_coefficient() == doctest::Approx(printed.outcome_coefficient()).epsilon(1e-15));
    }
}

TEST_CASE("build_welfare: differencing and demeaning") {
    std::mt19937_64 rng(5);
    const auto ds = testutil::random_dataset(rng, 50, 2);
    const WelfareParams p;
    const auto a = build_welfare(ds, p, true, false);
    const auto b = build_welfare(ds, p, true, true);
    CHECK(a.baseline_differenced);
    CHECK(b.demeaned);
    CHECK(std::abs(mean(b.w)) < 1e-9 * (1.0 + std::abs(mean(a.w))));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double y = ds.y_treat(i) - ds.y_base(i);
        const double expect = -p.kappa() * y - (ds.choice(i) == Choice::T ? p.admin_cost : 0.0);
        CHECK(a.w[i] == doctest::Approx(expect).epsilon(1e-13));
        CHECK(b.w[i] - a.w[i] == doctest::Approx(-mean(a.w)).epsilon(1e-9));
    }
    const auto levels = build_welfare(ds, p, false, false);
    CHECK(levels.w[0] == doctest::Approx(-p.kappa() * ds.y_treat(0) - (ds.choice(0) == Choice::T ? p.admin_cost : 0)));
}

TEST_CASE("empirical welfare by hand") {
    const auto ds = six_rows();
    const auto props = sample_propensities(ds);
    const auto w = outcome_of({1, 2, 3, 4, 5, 6});
    CHECK(empirical_welfare(w, ds, AssignmentPolicy::uniform(Arm::T), props) == doctest::Approx(3.5));
    CHECK(empirical_welfare(w, ds, AssignmentPolicy::uniform(Arm::NT), props) == doctest::Approx(1.5));
    const auto g = welfare_gain(w, ds, AssignmentPolicy::uniform(Arm::T), AssignmentPolicy::uniform(Arm::NT), props);
    CHECK(g.value == doctest::Approx(2.0));

    const auto zeros = outcome_of(std::vector<double>(6, 0.0));
    const auto ones = outcome_of(std::vector<double>(6, 1.0));
    for (Arm a : kAllArms) {
        CHECK(empirical_welfare(zeros, ds, AssignmentPolicy::uniform(a), props) == 0.0);
        CHECK(empirical_welfare(ones, ds, AssignmentPolicy::uniform(a), props) == doctest::Approx(1.0).epsilon(1e-15));
    }
    const auto same = welfare_gain(w, ds, AssignmentPolicy::uniform(Arm::O), AssignmentPolicy::uniform(Arm::O), props);
    CHECK(same.value == 0.0);
    CHECK(same.se == 0.0);
}

TEST_CASE("zero propensity for an emitted arm is an error") {
    const auto ds = six_rows();
    PerArm<double> props{0.5, 0.5, 0.0};
    CHECK_THROWS_AS(empirical_welfare(outcome_of(std::vector<double>(6, 1.0)), ds, AssignmentPolicy::uniform(Arm::O), props),
                    NumericError);
}

TEST_CASE("gains telescope and welfare is linear in w") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        const auto ds = testutil::random_dataset(rng, 40, 2);
        const auto props = sample_propensities(ds);
        const auto w = outcome_of(testutil::random_welfare(rng, ds.size()));
        const DecisionTree ta = DecisionTree::split({"x1", "x2"}, 0, 0.5, DecisionTree({"x1", "x2"}, Arm::T),
                                                    DecisionTree({"x1", "x2"}, Arm::O));
        const DecisionTree tb = DecisionTree::split({"x1", "x2"}, 1, 0.3, DecisionTree({"x1", "x2"}, Arm::NT),
                                                    DecisionTree({"x1", "x2"}, Arm::T));
        const AssignmentPolicy a(ta), b(tb), nt = AssignmentPolicy::uniform(Arm::NT);
        const double lhs = welfare_gain(w, ds, a, nt, props).value - welfare_gain(w, ds, b, nt, props).value;
        CHECK(lhs == doctest::Approx(welfare_gain(w, ds, a, b, props).value).epsilon(1e-9));

        auto scaled = w;
        for (auto& v : scaled.w) v *= 3.5;
        CHECK(empirical_welfare(scaled, ds, a, props) ==
              doctest::Approx(3.5 * empirical_welfare(w, ds, a, props)).epsilon(1e-12));

        // each row contributes to exactly one arm term
        const auto s = ipw_scores(w, ds, a, props);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const bool match = a.assign(ds.x(i)) == ds.arm(i);
            CHECK((s[i] != 0.0) == (match && w.w[i] != 0.0));
        }
    }
}

TEST_CASE("sample moments") {
    const std::vector<double> v{1, 2, 3, 4};
    CHECK(mean(v) == 2.5);
    CHECK(sample_sd(v) == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(sample_sd(std::vector<double>{7}) == 0.0);
    const Estimate e{10, 1};
    CHECK(e.lower95() == doctest::Approx(10 - 1.959963985));
}
