#pragma once

#include "ewm/arm.hpp"
#include "ewm/dataset.hpp"
#include "ewm/policy.hpp"
#include "ewm/welfare.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ewm {

/// Closed-form scalar function of x used for conditional means and for the
/// logistic selection coefficients.
struct Form {
    enum class Kind { Constant, Linear, Step };
    Kind kind = Kind::Constant;
    double value = 0.0;         // constant / intercept / value below threshold
    double above = 0.0;         // step: value at or above threshold
    std::size_t var = 0;        // step covariate
    double threshold = 0.0;     // step threshold
    std::vector<double> slopes; // linear

    static Form constant(double v);
    static Form linear(double intercept, std::vector<double> slopes);
    static Form step(std::size_t var, double threshold, double below, double above);

    double operator()(std::span<const double> x) const;

    // Inverse of parse_form.
    std::string str() const;
    // Largest covariate index the form reads, plus one.
    std::size_t min_dim() const noexcept;
};

// "3.5", "const:3.5", "linear:b0,b1,...", "step:var,threshold,below,above".
Form parse_form(std::string_view text);

enum class CovariateLaw { Uniform, Normal };
enum class NoiseLaw { Gaussian, Laplace };
enum class Selection { Roy, Logistic };

/// Synthetic three-arm experiment with known potential welfare.
struct DgpSpec {
    std::size_t dim = 2;
    CovariateLaw covariates = CovariateLaw::Uniform;
    Form m_T;
    Form m_NT;
    double sigma = 1000.0; // JPY, sd of each potential-welfare noise term
    NoiseLaw noise = NoiseLaw::Gaussian;
    Selection selection = Selection::Roy;
    Form intercept;        // logistic only
    Form alignment;        // logistic only
    PerArm<double> arm_shares{0.4, 0.4, 0.2};
    WelfareParams params;  // maps welfare back to consumption
    double base_level = 50.0; // kWh baseline consumption

    // Throws ConfigError.
    void validate() const;
    std::string describe() const;
};

// Named starting points: "roy", "logistic", "null", "heterogeneous".
DgpSpec dgp_preset(std::string_view name);

struct SimulatedData {
    RctDataset data;
    std::vector<double> w_T;
    std::vector<double> w_NT;
    std::vector<Choice> z_opt; // choice the row would make if offered O

    // Welfare the row would realize under arm a.
    double potential(std::size_t i, Arm a) const noexcept;
};

/// Draws n households. Consumption is y_base = base_level and
/// y_treat = y_base + (w + a * 1{z = T}) / beta, so build_welfare with
/// baseline differencing returns the realized potential welfare.
/// Throws NumericError if that would make consumption negative.
SimulatedData generate(const DgpSpec& spec, std::size_t n, std::uint64_t seed);

std::string truth_to_csv(const SimulatedData& sim);
void write_truth_csv(const SimulatedData& sim, const std::filesystem::path& path);

// In-sample welfare of a policy computed from the hidden potential outcomes.
double sidecar_welfare(const SimulatedData& sim, const AssignmentPolicy& policy);

/// Conditional effects at one x.
struct OracleTruth {
    double q = 0.0;       // P(Z(O) = T | x)
    double cate = 0.0;    // E[W(T) - W(NT) | x]
    double cate_T = 0.0;  // ... among takers
    double cate_NT = 0.0; // ... among non-takers
    PerArm<double> mean{}; // E[W(j) | x]
};

OracleTruth oracle_truth(const DgpSpec& spec, std::span<const double> x);

/// Welfare-optimal arm from the three conditional effects; ties favour O, then T.
Arm oracle_assignment(const OracleTruth& truth);

/// Monte Carlo value of E[W(G(X))] over fresh draws.
Estimate true_policy_welfare(const DgpSpec& spec, const AssignmentPolicy& policy,
                             std::size_t n_mc = 1'000'000, std::uint64_t seed = 20240601);

/// W(a) - W(b) from the same draws, so the SE reflects only where they differ.
Estimate true_policy_gain(const DgpSpec& spec, const AssignmentPolicy& a, const AssignmentPolicy& b,
                          std::size_t n_mc = 1'000'000, std::uint64_t seed = 20240601);

} // namespace ewm
