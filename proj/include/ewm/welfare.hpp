#pragma once

#include "ewm/arm.hpp"
#include "ewm/dataset.hpp"
#include "ewm/policy.hpp"

#include <span>
#include <string>
#include <vector>

namespace ewm {

/// How the consumption outcome enters welfare.
///  - SavingsPositive: W = -(delta + (c - p)/2) * Y - a * 1{z = T}; a kWh saved adds welfare.
///  - ConsumptionPositive: W = (delta + (p - c)/2) * Y - a * 1{z = T}, the literal
///    coefficient as originally written (config token "paper_printed").
enum class SignConvention { SavingsPositive, ConsumptionPositive };

std::string_view to_string(SignConvention s) noexcept;
SignConvention parse_sign_convention(std::string_view token);

struct WelfareParams {
    double price = 25.0;          // p, JPY/kWh
    double marginal_cost = 125.0; // c, JPY/kWh
    double admin_cost = 291.1;    // a, JPY per treated household
    double delta = 9425.0 / 28.0; // JPY/kWh long-term benefit of a unit reduction
    SignConvention sign = SignConvention::SavingsPositive;

    /// delta is the capacity price (JPY/kW) spread over the event hours.
    static WelfareParams from_capacity_price(double price, double marginal_cost,
                                             double admin_cost, double capacity_price,
                                             double event_hours,
                                             SignConvention sign = SignConvention::SavingsPositive);

    // delta + (c - p)/2: welfare per kWh saved under SavingsPositive.
    double kappa() const noexcept { return delta + (marginal_cost - price) / 2.0; }

    // beta in W = beta * Y - a * 1{z = T}.
    double outcome_coefficient() const noexcept;

    // Throws ConfigError unless every parameter is finite and non-negative.
    void validate() const;
};

struct WelfareOutcome {
    std::vector<double> w; // JPY per household, aligned with dataset rows
    bool demeaned = false;
    bool baseline_differenced = false;

    std::size_t size() const noexcept { return w.size(); }
};

/// Y = y_treat - y_base when baseline_diff, otherwise y_treat; then
/// W = beta * Y - a * 1{z = T}, optionally minus its grand mean.
WelfareOutcome build_welfare(const RctDataset& ds, const WelfareParams& params,
                             bool baseline_diff, bool demean);

/// Same transform applied to an explicit outcome and choice vector.
std::vector<double> welfare_from_outcome(std::span<const double> y, std::span<const Choice> z,
                                         const WelfareParams& params, bool demean);

/// Per-row IPW contribution w_i * 1{d_i = G(x_i)} / p_{d_i}; its mean is the
/// empirical welfare of G. Throws NumericError if G assigns some row to an
/// arm with non-positive propensity.
std::vector<double> ipw_scores(const WelfareOutcome& w, const RctDataset& ds,
                               const AssignmentPolicy& policy, const PerArm<double>& props);

double empirical_welfare(const WelfareOutcome& w, const RctDataset& ds,
                         const AssignmentPolicy& policy, const PerArm<double>& props);

struct Estimate {
    double value = 0.0;
    double se = 0.0;

    double lower95() const noexcept;
    double upper95() const noexcept;
};

inline constexpr double kZ95 = 1.959963984540054;

/// W(a) - W(b) with the standard error of the per-row score difference.
Estimate welfare_gain(const WelfareOutcome& w, const RctDataset& ds, const AssignmentPolicy& a,
                      const AssignmentPolicy& b, const PerArm<double>& props);

// Sample mean and sample standard deviation (n - 1 denominator; 0 when n < 2).
double mean(std::span<const double> v);
double sample_sd(std::span<const double> v);

} // namespace ewm
