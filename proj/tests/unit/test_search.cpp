#include "ewm/errors.hpp"
#include "ewm/search.hpp"
#include "ewm/synthetic.hpp"

#include "../oracles/brute_force.hpp"
#include "helpers.hpp"

#include <doctest.h>

using namespace ewm;

namespace {

WelfareOutcome outcome_of(std::vector<double> w) {
    WelfareOutcome o;
    o.w = std::move(w);
    return o;
}

double oracle_max(const RctDataset& ds, const std::vector<double>& w, std::vector<Arm> arms, int depth,
                  std::size_t min_leaf) {
    oracle::BruteForceInput in{&ds, w, std::move(arms), min_leaf};
    return oracle::brute_force_welfare(in, depth);
}

} // namespace

TEST_CASE("midpoint thresholds separate neighbours") {
    const std::vector<double> v{3, 1, 2, 2, 5};
    CHECK(midpoint_thresholds(v, 0) == std::vector<double>{1.5, 2.5, 4.0});
    CHECK(midpoint_thresholds(std::vector<double>{1, 1}, 0).empty());
    // adjacent doubles: the midpoint rounds onto one of them
    const double a = 1.0, b = std::nextafter(1.0, 2.0);
    const auto t = midpoint_thresholds(std::vector<double>{a, b}, 0);
    REQUIRE(t.size() == 1);
    CHECK(t[0] > a);
    CHECK(t[0] <= b);

    std::mt19937_64 rng(3);
    std::vector<double> many(1000);
    for (auto& x : many) x = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto sub = midpoint_thresholds(many, 16);
    CHECK(sub.size() <= 16);
    CHECK(sub.size() >= 14);
    CHECK(std::is_sorted(sub.begin(), sub.end()));
}

TEST_CASE("exhaustive search matches brute force on small instances") {
    std::mt19937_64 rng(2024);
    for (int rep = 0; rep < 30; ++rep) {
        const std::size_t n = 20 + rep;
        const auto ds = testutil::random_dataset(rng, n, 2, 2, rep % 3 == 0);
        const auto w = testutil::random_welfare(rng, n);
        const auto props = sample_propensities(ds);
        const auto wo = outcome_of(w);
        for (int depth : {1, 2}) {
            for (std::size_t min_leaf : {std::size_t{1}, std::size_t{5}}) {
                SearchOptions opts;
                opts.min_leaf = min_leaf;
                const std::vector<Arm> arms{Arm::NT, Arm::T, Arm::O};
                const auto res = exhaustive_search(wo, ds, props, arms, depth, opts);
                CHECK(res.welfare == doctest::Approx(oracle_max(ds, w, arms, depth, min_leaf)).epsilon(1e-12));
                CHECK(res.welfare == doctest::Approx(empirical_welfare(wo, ds, res.tree, props)).epsilon(1e-15));
                CHECK(res.tree.depth() <= depth);
            }
        }
        const std::vector<Arm> pair{Arm::T, Arm::O};
        const auto res = exhaustive_search(wo, ds, props, pair, 2, {});
        CHECK(res.welfare == doctest::Approx(oracle_max(ds, w, pair, 2, 5)).epsilon(1e-12));
        for (std::size_t i = 0; i < ds.size(); ++i) CHECK(res.tree.assign(ds.x(i)) != Arm::NT);
    }
}

TEST_CASE("depth-3 search matches brute force") {
    std::mt19937_64 rng(77);
    for (int rep = 0; rep < 4; ++rep) {
        const std::size_t n = 28;
        const auto ds = testutil::random_dataset(rng, n, 2);
        const auto w = testutil::random_welfare(rng, n);
        const std::vector<Arm> arms{Arm::NT, Arm::T, Arm::O};
        SearchOptions opts;
        opts.min_leaf = 2;
        const auto res = exhaustive_search(outcome_of(w), ds, sample_propensities(ds), arms, 3, opts);
        CHECK(res.welfare == doctest::Approx(oracle_max(ds, w, arms, 3, 2)).epsilon(1e-12));
    }
}

TEST_CASE("a pointwise dominant arm gives the uniform policy") {
    std::mt19937_64 rng(8);
    const auto ds = testutil::random_dataset(rng, 60, 2);
    std::vector<double> w(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) w[i] = ds.arm(i) == Arm::O ? 10.0 + i : -1.0 - i;
    const auto props = sample_propensities(ds);
    const auto wo = outcome_of(w);
    const auto res = exhaustive_search(wo, ds, props, kAllArms, 2);
    CHECK(res.tree.is_leaf_only());
    CHECK(res.tree.assign(ds.x(0)) == Arm::O);
    CHECK(res.welfare == doctest::Approx(empirical_welfare(wo, ds, AssignmentPolicy::uniform(Arm::O), props)));
}

TEST_CASE("constant covariates leave only uniform policies") {
    std::vector<Household> rows;
    for (int i = 0; i < 30; ++i) {
        const Arm a = static_cast<Arm>(i % 3);
        rows.push_back({std::to_string(i), {1.0, 2.0}, a, a == Arm::T ? Choice::T : Choice::NT, 1, 1});
    }
    const RctDataset ds({"a", "b"}, rows);
    std::vector<double> w(30);
    for (int i = 0; i < 30; ++i) w[i] = (i % 3 == 1) ? 5.0 : 1.0;
    const auto res = exhaustive_search(outcome_of(w), ds, sample_propensities(ds), kAllArms, 3);
    CHECK(res.tree.is_leaf_only());
    CHECK(res.tree.assign(ds.x(0)) == Arm::T);
}

TEST_CASE("negating welfare and swapping the two labels shifts the optimum by a constant") {
    // For arms {a, b}: W'(swap(G)) = W(G) - (1/n) sum_i (Gamma_a + Gamma_b), a bijection of trees.
    std::mt19937_64 rng(99);
    for (int rep = 0; rep < 10; ++rep) {
        const auto ds = testutil::random_dataset(rng, 50, 2);
        const auto w = testutil::random_welfare(rng, ds.size());
        auto neg = w;
        for (auto& v : neg) v = -v;
        const auto props = sample_propensities(ds);
        const std::vector<Arm> arms{Arm::NT, Arm::T};
        const auto a = exhaustive_search(outcome_of(w), ds, props, arms, 2);
        const auto b = exhaustive_search(outcome_of(neg), ds, props, arms, 2);
        double s = 0.0;
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (ds.arm(i) != Arm::O) s += w[i] / props[index(ds.arm(i))];
        s /= static_cast<double>(ds.size());
        CHECK(b.welfare == doctest::Approx(a.welfare - s).epsilon(1e-12));
        // the swapped optimum of one problem is optimal for the other
        const auto swapped = a.tree.relabeled(Arm::T, Arm::NT);
        CHECK(empirical_welfare(outcome_of(neg), ds, swapped, props) == doctest::Approx(b.welfare).epsilon(1e-12));
    }
}

TEST_CASE("observed values as thresholds do not improve on midpoints") {
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 10; ++rep) {
        const auto ds = testutil::random_dataset(rng, 45, 2, 2, rep % 2 == 0);
        const auto w = outcome_of(testutil::random_welfare(rng, ds.size()));
        const auto props = sample_propensities(ds);
        const auto scores = arm_scores(w, ds, props);
        TreeProblem p;
        p.data = &ds;
        p.scores = scores;
        for (std::size_t i = 0; i < ds.size(); ++i) p.rows.push_back(i);
        p.arms = {Arm::NT, Arm::T, Arm::O};
        TreeProblem rich = p;
        p.thresholds.resize(2);
        rich.thresholds.resize(2);
        for (std::size_t k = 0; k < 2; ++k) {
            std::vector<double> col;
            for (std::size_t i = 0; i < ds.size(); ++i) col.push_back(ds.x(i, k));
            p.thresholds[k] = midpoint_thresholds(col, 0);
            auto all = col;
            all.insert(all.end(), p.thresholds[k].begin(), p.thresholds[k].end());
            std::sort(all.begin(), all.end());
            all.erase(std::unique(all.begin(), all.end()), all.end());
            rich.thresholds[k] = all;
        }
        const auto a = solve_tree(p, 2, {});
        const auto b = solve_tree(rich, 2, {});
        CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-12));
    }
}

TEST_CASE("search is deterministic and independent of the thread count") {
    std::mt19937_64 rng(12);
    const auto ds = testutil::random_dataset(rng, 300, 3, 2, true);
    const auto w = outcome_of(testutil::random_welfare(rng, ds.size()));
    const auto props = sample_propensities(ds);
    SearchOptions one, four;
    one.max_candidates = four.max_candidates = 12;
    four.threads = 4;
    const auto a = exhaustive_search(w, ds, props, kAllArms, 3, one);
    const auto b = exhaustive_search(w, ds, props, kAllArms, 3, four);
    const auto c = exhaustive_search(w, ds, props, kAllArms, 3, one);
    CHECK(a.tree == b.tree);
    CHECK(a.tree == c.tree);
    CHECK(a.welfare == b.welfare);
    const auto ta = two_step_search(w, ds, props, 2, one);
    const auto tb = two_step_search(w, ds, props, 2, four);
    CHECK(ta.tree == tb.tree);
    CHECK(ta.welfare == tb.welfare);
}

TEST_CASE("ties prefer the shallower tree and the lower arm") {
    std::vector<Household> rows;
    for (int i = 0; i < 30; ++i) {
        const Arm a = static_cast<Arm>(i % 3);
        rows.push_back({std::to_string(i), {static_cast<double>(i)}, a, a == Arm::T ? Choice::T : Choice::NT, 1, 1});
    }
    const RctDataset ds({"x"}, rows);
    const auto res = exhaustive_search(outcome_of(std::vector<double>(30, 0.0)), ds, sample_propensities(ds),
                                       kAllArms, 2);
    CHECK(res.tree.is_leaf_only());
    CHECK(res.tree.assign(ds.x(0)) == Arm::NT);
}

TEST_CASE("search preconditions") {
    std::mt19937_64 rng(1);
    const auto ds = testutil::random_dataset(rng, 30, 2);
    const auto w = outcome_of(testutil::random_welfare(rng, ds.size()));
    const auto props = sample_propensities(ds);
    CHECK_THROWS_AS(exhaustive_search(w, ds, props, kAllArms, 0), ConfigError);
    CHECK_THROWS_AS(exhaustive_search(w, ds, props, kAllArms, 4), ConfigError);
    CHECK_THROWS_AS(exhaustive_search(w, ds, props, std::vector<Arm>{Arm::T}, 2), ConfigError);
    CHECK_THROWS_AS(exhaustive_search(w, ds, props, std::vector<Arm>{Arm::T, Arm::T}, 2), ConfigError);

    std::vector<Household> rows;
    for (int i = 0; i < 10; ++i) rows.push_back({std::to_string(i), {double(i)}, i % 2 ? Arm::T : Arm::NT, i % 2 ? Choice::T : Choice::NT, 1, 1});
    const RctDataset two({"x"}, rows);
    const PerArm<double> p2{0.5, 0.5, 0.0};
    const auto w2 = outcome_of(std::vector<double>(10, 1.0));
    CHECK_THROWS_AS(exhaustive_search(w2, two, p2, kAllArms, 2), NumericError);
    CHECK_NOTHROW(exhaustive_search(w2, two, p2, std::vector<Arm>{Arm::NT, Arm::T}, 2));
    CHECK_THROWS_AS(two_step_search(w2, two, p2), NumericError);
}

TEST_CASE("two-step search refines its first step") {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 5; ++rep) {
        const auto ds = testutil::random_dataset(rng, 150, 2);
        const auto w = outcome_of(testutil::random_welfare(rng, ds.size()));
        const auto props = sample_propensities(ds);
        SearchOptions opts;
        opts.max_candidates = 10;
        const auto res = two_step_search(w, ds, props, 3, opts);
        CHECK(res.tree.depth() <= 6);
        CHECK(res.candidates.size() == 3);
        CHECK(res.welfare == doctest::Approx(empirical_welfare(w, ds, res.tree, props)).epsilon(1e-15));
        CHECK(res.welfare >= empirical_welfare(w, ds, res.first_step, props));
        const std::pair<Arm, Arm> pairs[] = {{Arm::T, Arm::NT}, {Arm::NT, Arm::O}, {Arm::T, Arm::O}};
        for (const auto& [a, b] : pairs) {
            const std::vector<Arm> arms{a, b};
            const auto pr = exhaustive_search(w, ds, props, arms, 3, opts);
            CHECK(res.welfare >= pr.welfare);
        }
        bool found = false;
        for (const auto& [pair, value] : res.candidates)
            if (pair == res.start_pair) found = value == res.welfare;
        CHECK(found);
    }
}

TEST_CASE("two-step search assigns nobody when treatment only costs") {
    DgpSpec spec = dgp_preset("null");
    spec.sigma = 0.0;
    const auto sim = generate(spec, 600, 5);
    const auto w = build_welfare(sim.data, spec.params, true, false);
    SearchOptions opts;
    opts.max_candidates = 8;
    const auto res = two_step_search(w, sim.data, sample_propensities(sim.data), 3, opts);
    for (const auto& node : res.tree.nodes())
        if (node.is_leaf()) CHECK(node.arm == Arm::NT);
}
