#include "ewm/synthetic.hpp"

#include "ewm/csv.hpp"
#include "ewm/errors.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ewm {

namespace {

std::vector<double> split_numbers(std::string_view text, std::string_view what) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = std::min(text.find(',', start), text.size());
        auto field = text.substr(start, end - start);
        while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
        while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
        const auto v = csv::to_double(field);
        if (!v || !std::isfinite(*v)) throw ConfigError("bad number '" + std::string(field) + "' in " + std::string(what));
        out.push_back(*v);
        start = end + 1;
    }
    return out;
}

double logistic(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// E[U - a | U >= a] for standard normal U; positive for every a.
double truncated_excess(double a) {
    if (a < 5.0) return norm_pdf(a) / norm_cdf(-a) - a;
    // continued fraction of the inverse Mills ratio minus a
    double tail = a;
    for (int k = 80; k >= 2; --k) tail = a + k / tail;
    return 1.0 / tail;
}

// One household's latent draws.
struct Unit {
    std::vector<double> x;
    double w_T = 0.0;
    double w_NT = 0.0;
    Choice z_opt = Choice::NT;
};

class Sampler {
public:
    Sampler(const DgpSpec& spec, std::uint64_t seed) : spec_(spec), rng_(seed) { unit_.x.resize(spec.dim); }

    const Unit& draw() {
        for (auto& v : unit_.x) v = spec_.covariates == CovariateLaw::Uniform ? uniform_(rng_) : normal_(rng_);
        unit_.w_T = spec_.m_T(unit_.x) + noise();
        unit_.w_NT = spec_.m_NT(unit_.x) + noise();
        const double u = uniform_(rng_);
        bool take;
        if (spec_.selection == Selection::Roy) {
            take = unit_.w_T >= unit_.w_NT;
        } else {
            const double t = spec_.intercept(unit_.x) + spec_.alignment(unit_.x) * (unit_.w_T - unit_.w_NT);
            take = u < logistic(t);
        }
        unit_.z_opt = take ? Choice::T : Choice::NT;
        return unit_;
    }

    Arm draw_arm() {
        const double u = uniform_(rng_);
        const auto& s = spec_.arm_shares;
        if (u < s[0]) return Arm::NT;
        if (u < s[0] + s[1]) return Arm::T;
        return Arm::O;
    }

private:
    double noise() {
        if (spec_.noise == NoiseLaw::Gaussian) return spec_.sigma * normal_(rng_);
        // Laplace with standard deviation sigma
        const double u = uniform_(rng_) - 0.5;
        const double b = spec_.sigma / std::numbers::sqrt2;
        return (u < 0 ? 1.0 : -1.0) * b * std::log1p(-2.0 * std::abs(u));
    }

    const DgpSpec& spec_;
    std::mt19937_64 rng_;
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
    Unit unit_;
};

double realized(const Unit& u, Arm a) {
    switch (a) {
    case Arm::T: return u.w_T;
    case Arm::NT: return u.w_NT;
    case Arm::O: return u.z_opt == Choice::T ? u.w_T : u.w_NT;
    }
    return 0.0;
}

} // namespace

Form Form::constant(double v) {
    Form f;
    f.value = v;
    return f;
}

Form Form::linear(double intercept, std::vector<double> slopes) {
    Form f;
    f.kind = Kind::Linear;
    f.value = intercept;
    f.slopes = std::move(slopes);
    return f;
}

Form Form::step(std::size_t var, double threshold, double below, double above) {
    Form f;
    f.kind = Kind::Step;
    f.var = var;
    f.threshold = threshold;
    f.value = below;
    f.above = above;
    return f;
}

double Form::operator()(std::span<const double> x) const {
    switch (kind) {
    case Kind::Constant: return value;
    case Kind::Linear: {
        double s = value;
        for (std::size_t k = 0; k < slopes.size(); ++k) s += slopes[k] * x[k];
        return s;
    }
    case Kind::Step: return x[var] >= threshold ? above : value;
    }
    return value;
}

std::string Form::str() const {
    std::string out;
    switch (kind) {
    case Kind::Constant: return "const:" + format_double(value);
    case Kind::Linear:
        out = "linear:" + format_double(value);
        for (double s : slopes) out += "," + format_double(s);
        return out;
    case Kind::Step:
        return "step:" + std::to_string(var) + "," + format_double(threshold) + "," + format_double(value) +
               "," + format_double(above);
    }
    return out;
}

std::size_t Form::min_dim() const noexcept {
    switch (kind) {
    case Kind::Constant: return 0;
    case Kind::Linear: return slopes.size();
    case Kind::Step: return var + 1;
    }
    return 0;
}

Form parse_form(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) {
        const auto v = split_numbers(text, "constant form");
        if (v.size() != 1) throw ConfigError("bad form '" + std::string(text) + "'");
        return Form::constant(v[0]);
    }
    const auto kind = text.substr(0, colon);
    const auto args = split_numbers(text.substr(colon + 1), text);
    if (kind == "const" && args.size() == 1) return Form::constant(args[0]);
    if (kind == "linear" && !args.empty())
        return Form::linear(args[0], std::vector<double>(args.begin() + 1, args.end()));
    if (kind == "step" && args.size() == 4 && args[0] >= 0 && args[0] == std::floor(args[0]))
        return Form::step(static_cast<std::size_t>(args[0]), args[1], args[2], args[3]);
    throw ConfigError("bad form '" + std::string(text) + "'");
}

void DgpSpec::validate() const {
    if (dim == 0) throw ConfigError("dgp needs at least one covariate");
    for (const Form* f : {&m_T, &m_NT, &intercept, &alignment})
        if (f->min_dim() > dim) throw ConfigError("form '" + f->str() + "' reads beyond the covariate dimension");
    if (!std::isfinite(sigma) || sigma < 0) throw ConfigError("sigma must be finite and non-negative");
    double total = 0.0;
    for (double s : arm_shares) {
        if (!std::isfinite(s) || s < 0) throw ConfigError("arm shares must be non-negative");
        total += s;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("arm shares must sum to 1");
    params.validate();
    if (params.outcome_coefficient() == 0.0) throw ConfigError("welfare outcome coefficient is zero");
    if (!std::isfinite(base_level) || base_level < 0) throw ConfigError("base level must be non-negative");
}

std::string DgpSpec::describe() const {
    std::ostringstream out;
    out << "covariates: " << dim << (covariates == CovariateLaw::Uniform ? " x U[0,1]" : " x N(0,1)") << '\n'
        << "m_T: " << m_T.str() << '\n'
        << "m_NT: " << m_NT.str() << '\n'
        << "noise: " << (noise == NoiseLaw::Gaussian ? "gaussian" : "laplace") << ", sigma " << sigma << '\n';
    if (selection == Selection::Roy)
        out << "selection: roy\n";
    else
        out << "selection: logistic, intercept " << intercept.str() << ", alignment " << alignment.str() << '\n';
    out << "arm shares NT/T/O: " << arm_shares[0] << '/' << arm_shares[1] << '/' << arm_shares[2] << '\n';
    return out.str();
}

DgpSpec dgp_preset(std::string_view name) {
    DgpSpec s;
    s.m_T = Form::step(0, 0.5, -300.0, 300.0);
    s.m_NT = Form::constant(0.0);
    if (name == "roy") return s;
    if (name == "logistic") {
        s.selection = Selection::Logistic;
        s.alignment = Form::constant(0.002);
        return s;
    }
    if (name == "heterogeneous") {
        // informed choosers when x2 >= 0.5, contrarian ones below
        s.selection = Selection::Logistic;
        s.alignment = Form::step(1, 0.5, -0.01, 0.01);
        return s;
    }
    if (name == "null") {
        // no consumption response; treatment only costs the admin fee
        s.m_T = Form::constant(-s.params.admin_cost);
        s.sigma = 3000.0;
        s.selection = Selection::Logistic;
        s.intercept = Form::constant(std::log(300.0 / 507.0));
        s.alignment = Form::constant(0.0);
        return s;
    }
    throw ConfigError("unknown dgp '" + std::string(name) + "' (expected roy, logistic, heterogeneous or null)");
}

double SimulatedData::potential(std::size_t i, Arm a) const noexcept {
    switch (a) {
    case Arm::T: return w_T[i];
    case Arm::NT: return w_NT[i];
    case Arm::O: return z_opt[i] == Choice::T ? w_T[i] : w_NT[i];
    }
    return 0.0;
}

SimulatedData generate(const DgpSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (n == 0) throw ConfigError("sample size must be positive");
    Sampler sampler(spec, seed);
    const double beta = spec.params.outcome_coefficient();
    const double a = spec.params.admin_cost;

    std::vector<std::string> schema(spec.dim);
    for (std::size_t k = 0; k < spec.dim; ++k) schema[k] = "x" + std::to_string(k + 1);
    SimulatedData sim;
    std::vector<Household> rows;
    rows.reserve(n);
    sim.w_T.reserve(n);
    sim.w_NT.reserve(n);
    sim.z_opt.reserve(n);
    const int width = static_cast<int>(std::to_string(n).size());
    for (std::size_t i = 0; i < n; ++i) {
        const Unit& u = sampler.draw();
        const Arm d = sampler.draw_arm();
        Household h;
        std::string num = std::to_string(i + 1);
        h.id = "h" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
        h.x = u.x;
        h.arm = d;
        h.choice = d == Arm::T ? Choice::T : d == Arm::NT ? Choice::NT : u.z_opt;
        const double w = realized(u, d);
        const double y = (w + (h.choice == Choice::T ? a : 0.0)) / beta;
        h.y_base = spec.base_level;
        h.y_treat = spec.base_level + y;
        if (h.y_treat < 0)
            throw NumericError("simulated consumption is negative; raise base_level or lower sigma");
        rows.push_back(std::move(h));
        sim.w_T.push_back(u.w_T);
        sim.w_NT.push_back(u.w_NT);
        sim.z_opt.push_back(u.z_opt);
    }
    sim.data = RctDataset(std::move(schema), std::move(rows));
    return sim;
}

std::string truth_to_csv(const SimulatedData& sim) {
    std::string out = "w_T,w_NT,z_opt\n";
    for (std::size_t i = 0; i < sim.w_T.size(); ++i)
        out += format_double(sim.w_T[i]) + "," + format_double(sim.w_NT[i]) + "," +
               std::string(to_string(sim.z_opt[i])) + "\n";
    return out;
}

void write_truth_csv(const SimulatedData& sim, const std::filesystem::path& path) {
    csv::write_file(path, truth_to_csv(sim));
}

double sidecar_welfare(const SimulatedData& sim, const AssignmentPolicy& policy) {
    const auto& ds = sim.data;
    if (ds.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) s += sim.potential(i, policy.assign(ds.x(i)));
    return s / static_cast<double>(ds.size());
}

OracleTruth oracle_truth(const DgpSpec& spec, std::span<const double> x) {
    OracleTruth t;
    const double mt = spec.m_T(x), mn = spec.m_NT(x);
    const double mu = mt - mn;
    t.cate = mu;
    t.mean[index(Arm::T)] = mt;
    t.mean[index(Arm::NT)] = mn;

    const bool roy = spec.selection == Selection::Roy;
    const double c = roy ? 0.0 : spec.intercept(x);
    const double al = roy ? 0.0 : spec.alignment(x);
    auto sel = [&](double delta) { return roy ? (delta >= 0 ? 1.0 : 0.0) : logistic(c + al * delta); };

    double q = 0.0, taker_mass = 0.0; // P(take), E[delta * 1{take}]
    if (spec.sigma == 0.0) {
        q = sel(mu);
        taker_mass = mu * q;
        t.q = q;
        t.cate_T = t.cate_NT = mu;
        t.mean[index(Arm::O)] = mn + taker_mass;
        return t;
    }
    if (roy && spec.noise == NoiseLaw::Gaussian) {
        const double s = spec.sigma * std::numbers::sqrt2;
        const double alpha = -mu / s;
        q = norm_cdf(-alpha);
        t.q = q;
        t.cate_T = s * truncated_excess(alpha);
        t.cate_NT = -s * truncated_excess(-alpha);
        t.mean[index(Arm::O)] = mn + q * t.cate_T;
        return t;
    }

    // density of eps_T - eps_NT
    const double sd = spec.sigma * std::numbers::sqrt2;
    const double b = spec.sigma / std::numbers::sqrt2;
    auto density = [&](double d) {
        if (spec.noise == NoiseLaw::Gaussian) return norm_pdf(d / sd) / sd;
        const double r = std::abs(d) / b;
        return (1.0 + r) * std::exp(-r) / (4.0 * b);
    };
    std::vector<double> cuts{-std::numeric_limits<double>::infinity(), 0.0,
                             std::numeric_limits<double>::infinity()};
    if (roy) cuts.push_back(-mu);
    else if (al != 0.0 && std::isfinite(-c / al - mu)) cuts.push_back(-c / al - mu);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    using Quad = boost::math::quadrature::gauss_kronrod<double, 31>;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double lo = cuts[i], hi = cuts[i + 1];
        if (roy && hi <= -mu) continue; // selection is zero there
        q += Quad::integrate([&](double d) { return density(d) * sel(mu + d); }, lo, hi, 15, 1e-10);
        taker_mass += Quad::integrate([&](double d) { return density(d) * (mu + d) * sel(mu + d); }, lo, hi,
                                      15, 1e-10);
    }
    q = std::clamp(q, 0.0, 1.0);
    t.q = q;
    t.cate_T = q > 0.0 ? taker_mass / q : mu;
    t.cate_NT = q < 1.0 ? (mu - taker_mass) / (1.0 - q) : mu;
    t.mean[index(Arm::O)] = mn + taker_mass;
    return t;
}

Arm oracle_assignment(const OracleTruth& t) {
    const double scale = std::abs(t.cate) + std::abs(t.cate_T) + std::abs(t.cate_NT) + 1.0;
    const double gap = t.cate - (t.q * t.cate_T + (1.0 - t.q) * t.cate_NT);
    if (std::abs(gap) > 1e-6 * scale) throw std::logic_error("oracle truth violates the mixture identity");
    const bool o_ok = (t.q >= 1.0 || t.cate_NT <= 0.0) && (t.q <= 0.0 || t.cate_T >= 0.0);
    if (o_ok) return Arm::O;
    if (t.cate >= 0.0 && t.cate_NT > 0.0) return Arm::T;
    if (t.cate < 0.0 && t.cate_T < 0.0) return Arm::NT;
    // Only reachable when rounding nudges the identity near a boundary.
    Arm best = Arm::O;
    for (Arm a : {Arm::T, Arm::NT})
        if (t.mean[index(a)] > t.mean[index(best)]) best = a;
    return best;
}

// Mean and standard error of fn(unit) over n_mc fresh draws (Welford updates).
template <typename Fn>
Estimate monte_carlo(const DgpSpec& spec, std::size_t n_mc, std::uint64_t seed, Fn fn) {
    spec.validate();
    if (n_mc < 2) throw ConfigError("need at least two Monte Carlo draws");
    Sampler sampler(spec, seed);
    double m = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n_mc; ++i) {
        const double v = fn(sampler.draw());
        const double d = v - m;
        m += d / static_cast<double>(i + 1);
        ss += d * (v - m);
    }
    const double n = static_cast<double>(n_mc);
    return {m, std::sqrt(ss / (n - 1.0) / n)};
}

Estimate true_policy_welfare(const DgpSpec& spec, const AssignmentPolicy& policy, std::size_t n_mc,
                             std::uint64_t seed) {
    return monte_carlo(spec, n_mc, seed, [&](const Unit& u) { return realized(u, policy.assign(u.x)); });
}

Estimate true_policy_gain(const DgpSpec& spec, const AssignmentPolicy& a, const AssignmentPolicy& b,
                          std::size_t n_mc, std::uint64_t seed) {
    return monte_carlo(spec, n_mc, seed, [&](const Unit& u) {
        return realized(u, a.assign(u.x)) - realized(u, b.assign(u.x));
    });
}

} // namespace ewm
