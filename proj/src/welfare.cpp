#include "ewm/welfare.hpp"

#include "ewm/errors.hpp"

#include <cmath>
#include <numeric>

namespace ewm {

std::string_view to_string(SignConvention s) noexcept {
    return s == SignConvention::SavingsPositive ? "savings_positive" : "paper_printed";
}

SignConvention parse_sign_convention(std::string_view token) {
    if (token == "savings_positive") return SignConvention::SavingsPositive;
    if (token == "paper_printed" || token == "consumption_positive")
        return SignConvention::ConsumptionPositive;
    throw ConfigError("unknown sign_convention '" + std::string(token) + "'");
}

WelfareParams WelfareParams::from_capacity_price(double price, double marginal_cost,
                                                 double admin_cost, double capacity_price,
                                                 double event_hours, SignConvention sign) {
    if (!(event_hours > 0.0)) throw ConfigError("event_hours must be positive");
    WelfareParams p;
    p.price = price;
    p.marginal_cost = marginal_cost;
    p.admin_cost = admin_cost;
    p.delta = capacity_price / event_hours;
    p.sign = sign;
    p.validate();
    return p;
}

double WelfareParams::outcome_coefficient() const noexcept {
    if (sign == SignConvention::SavingsPositive) return -kappa();
    return delta + (price - marginal_cost) / 2.0;
}

void WelfareParams::validate() const {
    auto check = [](double v, const char* name) {
        if (!std::isfinite(v) || v < 0.0)
            throw ConfigError(std::string(name) + " must be finite and non-negative");
    };
    check(price, "price");
    check(marginal_cost, "marginal_cost");
    check(admin_cost, "admin_cost");
    check(delta, "delta");
}

std::vector<double> welfare_from_outcome(std::span<const double> y, std::span<const Choice> z,
                                         const WelfareParams& params, bool demean) {
    if (y.size() != z.size()) throw DataError("outcome and choice vectors differ in length");
    const double beta = params.outcome_coefficient();
    std::vector<double> w(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        w[i] = beta * y[i] - (z[i] == Choice::T ? params.admin_cost : 0.0);
    if (demean && !w.empty()) {
        const double m = mean(w);
        for (auto& v : w) v -= m;
    }
    return w;
}

WelfareOutcome build_welfare(const RctDataset& ds, const WelfareParams& params,
                             bool baseline_diff, bool demean) {
    std::vector<double> y(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i)
        y[i] = baseline_diff ? ds.y_treat(i) - ds.y_base(i) : ds.y_treat(i);
    WelfareOutcome out;
    out.w = welfare_from_outcome(y, ds.choices(), params, demean);
    out.demeaned = demean;
    out.baseline_differenced = baseline_diff;
    return out;
}

std::vector<double> ipw_scores(const WelfareOutcome& w, const RctDataset& ds,
                               const AssignmentPolicy& policy, const PerArm<double>& props) {
    if (w.size() != ds.size()) throw DataError("welfare outcome does not match dataset size");
    std::vector<double> s(ds.size(), 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Arm g = policy.assign(ds.x(i));
        const double p = props[index(g)];
        if (!(p > 0.0))
            throw NumericError("policy assigns arm " + std::string(to_string(g)) +
                               " which has zero propensity");
        if (ds.arm(i) == g) s[i] = w.w[i] / p;
    }
    return s;
}

double empirical_welfare(const WelfareOutcome& w, const RctDataset& ds,
                         const AssignmentPolicy& policy, const PerArm<double>& props) {
    if (ds.empty()) throw NumericError("empirical welfare of an empty dataset");
    return mean(ipw_scores(w, ds, policy, props));
}

double Estimate::lower95() const noexcept { return value - kZ95 * se; }
double Estimate::upper95() const noexcept { return value + kZ95 * se; }

Estimate welfare_gain(const WelfareOutcome& w, const RctDataset& ds, const AssignmentPolicy& a,
                      const AssignmentPolicy& b, const PerArm<double>& props) {
    if (ds.empty()) throw NumericError("welfare gain on an empty dataset");
    auto sa = ipw_scores(w, ds, a, props);
    const auto sb = ipw_scores(w, ds, b, props);
    for (std::size_t i = 0; i < sa.size(); ++i) sa[i] -= sb[i];
    return {mean(sa), sample_sd(sa) / std::sqrt(static_cast<double>(sa.size()))};
}

double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

} // namespace ewm
