#include "ewm/effects.hpp"

#include "ewm/errors.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <sstream>

namespace ewm {

namespace {

struct ArmMoments {
    std::size_t n = 0;
    double mean = 0.0;
    double var_of_mean = 0.0;
};

ArmMoments moments(std::span<const double> v) {
    ArmMoments m;
    m.n = v.size();
    m.mean = ewm::mean(v);
    const double sd = sample_sd(v);
    if (m.n > 0) m.var_of_mean = sd * sd / static_cast<double>(m.n);
    return m;
}

Estimate from_var(double value, double var) { return {value, std::sqrt(std::max(var, 0.0))}; }

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string cell(const std::optional<Estimate>& e, int decimals) {
    if (!e) return "undefined";
    return fixed(e->value, decimals) + " [" + fixed(e->lower95(), decimals) + ", " +
           fixed(e->upper95(), decimals) + "]";
}

nlohmann::json estimate_json(const std::optional<Estimate>& e) {
    if (!e) return "undefined";
    return {{"estimate", e->value}, {"se", e->se}, {"ci95", {e->lower95(), e->upper95()}}};
}

} // namespace

Region whole_space() {
    return [](std::span<const double>) { return true; };
}

std::vector<std::size_t> rows_in(const RctDataset& ds, const Region& region) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (region(ds.x(i))) rows.push_back(i);
    return rows;
}

Estimate take_up_rate(const RctDataset& ds, std::span<const std::size_t> rows) {
    std::size_t n = 0, takers = 0;
    for (auto i : rows) {
        if (ds.arm(i) != Arm::O) continue;
        ++n;
        if (ds.choice(i) == Choice::T) ++takers;
    }
    if (n == 0) throw DataError("region contains no opt-in rows");
    const double q = static_cast<double>(takers) / static_cast<double>(n);
    return {q, std::sqrt(q * (1.0 - q) / static_cast<double>(n))};
}

Estimate take_up_rate(const RctDataset& ds, const Region& region) {
    return take_up_rate(ds, rows_in(ds, region));
}

SubgroupEffects subgroup_effects(const RctDataset& ds, const WelfareOutcome& w,
                                 std::span<const std::size_t> rows, std::string label) {
    if (w.size() != ds.size()) throw DataError("welfare outcome does not match dataset size");
    PerArm<std::vector<double>> by_arm;
    std::vector<double> z_opt;
    for (auto i : rows) {
        by_arm[index(ds.arm(i))].push_back(w.w[i]);
        if (ds.arm(i) == Arm::O) z_opt.push_back(ds.choice(i) == Choice::T ? 1.0 : 0.0);
    }
    for (Arm a : kAllArms)
        if (by_arm[index(a)].empty())
            throw DataError("region '" + label + "' has no rows in arm " + std::string(to_string(a)));

    const ArmMoments mt = moments(by_arm[index(Arm::T)]);
    const ArmMoments mn = moments(by_arm[index(Arm::NT)]);
    const ArmMoments mo = moments(by_arm[index(Arm::O)]);
    const auto n_o = static_cast<double>(mo.n);

    SubgroupEffects out;
    out.label = std::move(label);
    for (Arm a : kAllArms) {
        out.n[index(a)] = by_arm[index(a)].size();
        out.arm_mean[index(a)] = ewm::mean(by_arm[index(a)]);
    }
    const double q = ewm::mean(z_opt);
    const double var_q = q * (1.0 - q) / n_o;
    // plug-in covariance of the opt-in mean and the take-up rate
    double cov = 0.0;
    for (std::size_t r = 0; r < z_opt.size(); ++r)
        cov += (by_arm[index(Arm::O)][r] - mo.mean) * (z_opt[r] - q);
    cov /= n_o * n_o;

    out.takeup = {q, std::sqrt(var_q)};
    out.ate = from_var(mt.mean - mn.mean, mt.var_of_mean + mn.var_of_mean);
    const double itt = mo.mean - mn.mean;
    out.itt = from_var(itt, mo.var_of_mean + mn.var_of_mean);
    if (q > 0.0) {
        const double late = itt / q;
        const double var = (mo.var_of_mean + mn.var_of_mean) / (q * q) +
                           (late / q) * (late / q) * var_q - 2.0 * late / (q * q) * cov;
        out.late_takers = from_var(late, var);
    }
    if (q < 1.0) {
        const double r = 1.0 - q;
        const double late = (mt.mean - mo.mean) / r;
        const double var = (mt.var_of_mean + mo.var_of_mean) / (r * r) +
                           (late / r) * (late / r) * var_q - 2.0 * late / (r * r) * cov;
        out.late_nontakers = from_var(late, var);
    }
    return out;
}

SubgroupEffects subgroup_effects(const RctDataset& ds, const WelfareOutcome& w,
                                 const Region& region, std::string label) {
    return subgroup_effects(ds, w, rows_in(ds, region), std::move(label));
}

std::optional<HomogeneityTest> takeup_homogeneity(
    std::span<const std::pair<std::size_t, std::size_t>> counts) {
    std::size_t takers = 0, total = 0, groups = 0;
    for (auto [t, n] : counts) {
        if (n == 0) continue;
        takers += t;
        total += n;
        ++groups;
    }
    if (groups < 2 || takers == 0 || takers == total) return std::nullopt;
    const double p = static_cast<double>(takers) / static_cast<double>(total);
    double stat = 0.0;
    for (auto [t, n] : counts) {
        if (n == 0) continue;
        const double e1 = p * static_cast<double>(n), e0 = (1.0 - p) * static_cast<double>(n);
        const double o1 = static_cast<double>(t), o0 = static_cast<double>(n - t);
        stat += (o1 - e1) * (o1 - e1) / e1 + (o0 - e0) * (o0 - e0) / e0;
    }
    HomogeneityTest test;
    test.statistic = stat;
    test.df = static_cast<int>(groups) - 1;
    boost::math::chi_squared dist(test.df);
    test.p_value = boost::math::cdf(boost::math::complement(dist, stat));
    return test;
}

MechanismReport mechanism_report(const RctDataset& ds, const WelfareOutcome& w,
                                 const AssignmentPolicy& policy) {
    if (w.size() != ds.size()) throw DataError("welfare outcome does not match dataset size");
    PerArm<std::vector<std::size_t>> rows;
    for (std::size_t i = 0; i < ds.size(); ++i) rows[index(policy.assign(ds.x(i)))].push_back(i);

    MechanismReport report;
    std::vector<std::pair<std::size_t, std::size_t>> counts;
    for (Arm a : kAllArms) {
        MechanismColumn col;
        col.arm = a;
        col.rows = rows[index(a)].size();
        col.share = ds.empty() ? 0.0 : static_cast<double>(col.rows) / static_cast<double>(ds.size());
        if (col.rows == 0) {
            col.note = "no households assigned";
        } else {
            try {
                col.effects = subgroup_effects(ds, w, rows[index(a)], std::string(to_string(a)));
                const auto& e = *col.effects;
                const auto n_o = e.n[index(Arm::O)];
                counts.emplace_back(static_cast<std::size_t>(std::llround(e.takeup.value * n_o)), n_o);
            } catch (const DataError& err) {
                col.note = err.what();
            }
        }
        report.columns.push_back(std::move(col));
    }
    report.takeup_test = takeup_homogeneity(counts);
    return report;
}

std::string MechanismReport::to_tsv() const {
    std::ostringstream out;
    out << "row";
    for (const auto& c : columns) out << '\t' << to_string(c.arm);
    out << '\n';
    out << "Share";
    for (const auto& c : columns) out << '\t' << fixed(100.0 * c.share, 1) << '%';
    out << '\n';
    using Getter = std::optional<Estimate> (*)(const SubgroupEffects&);
    const std::array<std::pair<Getter, int>, 5> getters{{
        {[](const SubgroupEffects& e) -> std::optional<Estimate> { return e.takeup; }, 3},
        {[](const SubgroupEffects& e) { return e.late_takers; }, 1},
        {[](const SubgroupEffects& e) { return e.late_nontakers; }, 1},
        {[](const SubgroupEffects& e) -> std::optional<Estimate> { return e.ate; }, 1},
        {[](const SubgroupEffects& e) -> std::optional<Estimate> { return e.itt; }, 1},
    }};
    for (std::size_t r = 0; r < kMechanismRows.size(); ++r) {
        out << kMechanismRows[r];
        for (const auto& c : columns) {
            out << '\t';
            if (c.effects)
                out << cell(getters[r].first(*c.effects), getters[r].second);
            else
                out << '-';
        }
        out << '\n';
    }
    if (takeup_test)
        out << "Take-up homogeneity\tchi2=" << fixed(takeup_test->statistic, 3)
            << "\tdf=" << takeup_test->df << "\tp=" << fixed(takeup_test->p_value, 3) << '\n';
    return out.str();
}

std::string MechanismReport::to_json() const {
    nlohmann::json doc;
    doc["columns"] = nlohmann::json::array();
    for (const auto& c : columns) {
        nlohmann::json col{{"arm", std::string(to_string(c.arm))}, {"rows", c.rows}, {"share", c.share}};
        if (c.effects) {
            const auto& e = *c.effects;
            col["n"] = {{"NT", e.n[0]}, {"T", e.n[1]}, {"O", e.n[2]}};
            col[std::string(kMechanismRows[0])] = estimate_json(e.takeup);
            col[std::string(kMechanismRows[1])] = estimate_json(e.late_takers);
            col[std::string(kMechanismRows[2])] = estimate_json(e.late_nontakers);
            col[std::string(kMechanismRows[3])] = estimate_json(e.ate);
            col[std::string(kMechanismRows[4])] = estimate_json(e.itt);
        } else {
            col["note"] = c.note;
        }
        doc["columns"].push_back(std::move(col));
    }
    if (takeup_test)
        doc["takeup_homogeneity"] = {{"chi2", takeup_test->statistic},
                                     {"df", takeup_test->df},
                                     {"p_value", takeup_test->p_value}};
    return doc.dump(2) + "\n";
}

} // namespace ewm
