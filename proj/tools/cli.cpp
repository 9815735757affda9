#include "cli.hpp"

#include "ewm/csv.hpp"
#include "ewm/dataset.hpp"
#include "ewm/effects.hpp"
#include "ewm/errors.hpp"
#include "ewm/panel.hpp"
#include "ewm/policy.hpp"
#include "ewm/search.hpp"
#include "ewm/synthetic.hpp"
#include "ewm/testdata.hpp"
#include "ewm/welfare.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <sstream>

namespace ewm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
    std::string out = ".";
    std::uint64_t seed = 1;
    int threads = -1; // -1: take POLICY_THREADS, else all cores
};

struct WelfareFlags {
    double price = 25.0;
    double marginal_cost = 125.0;
    double admin_cost = 291.1;
    double capacity_price = 9425.0;
    double event_hours = 28.0;
    std::string sign = "savings_positive";
    bool baseline_diff = true;
    bool demean = false;

    WelfareParams params() const {
        if (!(event_hours > 0)) throw ConfigError("event_hours must be positive");
        auto p = WelfareParams::from_capacity_price(price, marginal_cost, admin_cost, capacity_price, event_hours,
                                                    parse_sign_convention(sign));
        p.validate();
        return p;
    }
};

struct DataFlags {
    std::string data;
    std::vector<std::string> covariates; // empty: every non-required column
};

struct SearchFlags {
    std::size_t min_leaf = 5;
    std::size_t max_candidates = 32;
};

struct CorrectionFlags {
    std::size_t reps = 100;
    std::string method = "knn";
    std::size_t knn_k = 0;
    std::size_t tree_min_leaf = 20;
    int tree_depth = 6;
};

void add_welfare(CLI::App* app, WelfareFlags& f) {
    app->add_option("--price", f.price, "retail price p (JPY/kWh)");
    app->add_option("--marginal-cost", f.marginal_cost, "marginal cost c (JPY/kWh)");
    app->add_option("--admin-cost", f.admin_cost, "administrative cost a per treated household (JPY)");
    app->add_option("--capacity-price", f.capacity_price, "capacity price (JPY/kW); delta = capacity_price / event_hours");
    app->add_option("--event-hours", f.event_hours, "total event hours");
    app->add_option("--sign-convention", f.sign, "savings_positive or paper_printed");
    app->add_flag("--baseline-diff,!--no-baseline-diff", f.baseline_diff, "difference outcomes against the baseline period");
    app->add_flag("--demean,!--no-demean", f.demean, "subtract the grand mean of welfare");
}

void add_data(CLI::App* app, DataFlags& f) {
    app->add_option("--data", f.data, "RCT dataset CSV")->required();
    app->add_option("--covariates", f.covariates, "covariate columns (default: all extra columns)")->delimiter(',');
}

void add_correction(CLI::App* app, CorrectionFlags& f) {
    app->add_option("--reps", f.reps, "artificial test datasets for the bias correction");
    app->add_option("--cond-mean", f.method, "conditional-mean estimator: knn or tree");
    app->add_option("--knn-k", f.knn_k, "neighbours (0: ceil(n^0.7) per arm)");
    app->add_option("--tree-min-leaf", f.tree_min_leaf, "regression-tree minimum leaf size");
    app->add_option("--tree-depth", f.tree_depth, "regression-tree maximum depth");
}

unsigned thread_count(const Globals& g) {
    if (g.threads >= 0) return static_cast<unsigned>(g.threads);
    if (const char* env = std::getenv("POLICY_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 0) throw ConfigError("POLICY_THREADS must be a non-negative integer");
        return static_cast<unsigned>(v);
    }
    return 0;
}

fs::path out_dir(const Globals& g) {
    std::error_code ec;
    fs::create_directories(g.out, ec);
    if (ec || !fs::is_directory(g.out)) throw ConfigError("cannot create output directory '" + g.out + "'");
    return fs::path(g.out);
}

LoadResult load(const DataFlags& f, std::ostream& err) {
    std::vector<std::string> schema = f.covariates;
    const std::string text = csv::read_file(f.data);
    if (schema.empty()) {
        const auto table = csv::parse(text);
        const std::vector<std::string> required{"id", "arm", "choice", "y_treat", "y_base"};
        for (const auto& h : table.header)
            if (std::find(required.begin(), required.end(), h) == required.end()) schema.push_back(h);
    }
    auto res = parse_csv(text, schema);
    for (const auto& w : res.warnings) err << "warning: " << w << '\n';
    return res;
}

CorrectionOptions correction(const CorrectionFlags& f, const WelfareFlags& wf, const Globals& g) {
    CorrectionOptions o;
    o.n_reps = f.reps;
    o.seed = g.seed;
    o.baseline_diff = wf.baseline_diff;
    o.demean = wf.demean;
    o.model.method = parse_cond_mean_method(f.method);
    o.model.k = f.knn_k;
    o.model.min_leaf = f.tree_min_leaf;
    o.model.max_depth = f.tree_depth;
    o.threads = thread_count(g);
    return o;
}

std::string jpy(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return std::string(buf) == "-0.0" ? "0.0" : buf;
}

std::string ci(const Estimate& e) { return "[" + jpy(e.lower95()) + ", " + jpy(e.upper95()) + "]"; }

json estimate_json(const Estimate& e) {
    return {{"estimate", e.value}, {"se", e.se}, {"ci95", {e.lower95(), e.upper95()}}};
}

struct ReportRow {
    std::string label;
    std::string shares;
    const AssignmentPolicy* a;
    const AssignmentPolicy* b; // baseline of the gain
};

// Naive and corrected gains for every row, written as TSV and JSON.
void write_gain_report(const std::vector<ReportRow>& rows, const RctDataset& ds, const WelfareOutcome& w,
                       const WelfareParams& params, const CorrectionOptions& copts, const fs::path& dir,
                       std::ostream& out, json& doc) {
    const auto props = sample_propensities(ds);
    std::vector<Contrast> contrasts;
    for (const auto& r : rows) contrasts.push_back({r.a, r.b});
    const auto corrected = corrected_contrasts(ds, contrasts, params, copts);

    std::ostringstream tsv;
    tsv << "Policy\tShares\tEst. Welfare Gain\t95 % CI\tCorrected Gain\t95 % CI (corrected)\n";
    doc["rows"] = json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto naive = welfare_gain(w, ds, *rows[i].a, *rows[i].b, props);
        const auto& c = corrected[i].estimate;
        tsv << rows[i].label << '\t' << rows[i].shares << '\t' << jpy(naive.value) << '\t' << ci(naive) << '\t'
            << jpy(c.value) << '\t' << ci(c) << '\n';
        doc["rows"].push_back({{"label", rows[i].label},
                               {"shares", rows[i].shares},
                               {"naive", estimate_json(naive)},
                               {"corrected", estimate_json(c)},
                               {"corrected_within_var", corrected[i].within_var},
                               {"corrected_between_var", corrected[i].between_var}});
    }
    csv::write_file(dir / "report.tsv", tsv.str());
    csv::write_file(dir / "report.json", doc.dump(2) + "\n");
    // the replication log follows the first learned-policy row
    write_replication_log(corrected[rows.size() > 3 ? 3 : 0], dir / "replications.csv");
    out << tsv.str();
}

void write_tree(const AssignmentPolicy& policy, const std::vector<std::string>& schema, const fs::path& dir,
                const std::string& stem) {
    csv::write_file(dir / (stem + ".json"), policy_to_json(policy) + "\n");
    const auto tree = policy.as_tree(schema);
    csv::write_file(dir / (stem + ".txt"), render_text(tree));
    csv::write_file(dir / (stem + ".dot"), render_dot(tree));
}

AssignmentPolicy read_policy(const std::string& path, const RctDataset& ds) {
    auto policy = policy_from_json(csv::read_file(path));
    if (!policy.is_uniform() && policy.tree().covariates() != ds.schema()) {
        std::string got, want;
        for (const auto& c : policy.tree().covariates()) got += c + " ";
        for (const auto& c : ds.schema()) want += c + " ";
        throw DataError("tree covariates (" + got + ") do not match the dataset schema (" + want +
                        "); pass --covariates in the tree's order");
    }
    return policy;
}

std::string label_with_shares(const AssignmentPolicy& p, const RctDataset& ds) { return format_shares(shares(p, ds)); }

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Welfare-maximizing assignment of compulsory and opt-in treatment", "ewm"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML config; command-line flags take precedence");
    Globals g;
    app.add_option("--out", g.out, "output directory");
    app.add_option("--seed", g.seed, "random seed");
    app.add_option("--threads", g.threads, "worker threads (0: all cores; default: POLICY_THREADS or all)");

    // simulate
    auto* sim = app.add_subcommand("simulate", "draw a synthetic three-arm experiment");
    std::string dgp = "roy";
    std::size_t n = 5000;
    std::optional<std::size_t> dim;
    std::optional<std::string> m_t, m_nt, intercept, alignment, noise, selection, law;
    std::optional<double> sigma, base_level;
    std::vector<double> arm_shares;
    WelfareFlags sim_w;
    sim->add_option("--dgp", dgp, "preset: roy, logistic, heterogeneous or null");
    sim->add_option("--n", n, "households");
    sim->add_option("--dim", dim, "covariate dimension");
    sim->add_option("--covariate-law", law, "uniform or normal");
    sim->add_option("--m-t", m_t, "E[W(T)|x]: const:v | linear:b0,b1,... | step:var,thr,below,above");
    sim->add_option("--m-nt", m_nt, "E[W(NT)|x], same syntax");
    sim->add_option("--sigma", sigma, "noise sd of each potential welfare (JPY)");
    sim->add_option("--noise", noise, "gaussian or laplace");
    sim->add_option("--selection", selection, "roy or logistic");
    sim->add_option("--intercept", intercept, "logistic selection intercept form");
    sim->add_option("--alignment", alignment, "logistic selection alignment form");
    sim->add_option("--arm-shares", arm_shares, "NT,T,O shares")->delimiter(',')->expected(3);
    sim->add_option("--base-level", base_level, "baseline consumption (kWh)");
    add_welfare(sim, sim_w);

    // learn
    auto* learn = app.add_subcommand("learn", "learn an assignment tree and report its welfare");
    DataFlags learn_d;
    WelfareFlags learn_w;
    SearchFlags learn_s;
    CorrectionFlags learn_c;
    std::string mode = "mixed";
    int depth = 3;
    add_data(learn, learn_d);
    add_welfare(learn, learn_w);
    add_correction(learn, learn_c);
    learn->add_option("--mode", mode, "paternalistic (T/NT, exhaustive) or mixed (T/NT/O, two-step)");
    learn->add_option("--depth", depth, "depth of the exhaustive search (per step in mixed mode)");
    learn->add_option("--min-leaf", learn_s.min_leaf, "minimum rows per leaf");
    learn->add_option("--max-candidates", learn_s.max_candidates,
                      "thresholds kept per covariate (0: every midpoint)");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "naive and bias-corrected welfare of a given tree");
    DataFlags eval_d;
    WelfareFlags eval_w;
    CorrectionFlags eval_c;
    std::string eval_tree;
    std::string truth;
    add_data(eval, eval_d);
    add_welfare(eval, eval_w);
    add_correction(eval, eval_c);
    eval->add_option("--tree", eval_tree, "policy JSON")->required();
    eval->add_option("--truth", truth, "hidden-truth sidecar CSV (w_T,w_NT,z_opt)");

    // effects
    auto* eff = app.add_subcommand("effects", "take-up, ATE, ITT and LATEs within each assigned region");
    std::string eff_data, eff_tree, panel_path, split_covariate;
    std::vector<std::string> eff_cov;
    WelfareFlags eff_w;
    eff->add_option("--data", eff_data, "RCT dataset CSV");
    eff->add_option("--covariates", eff_cov, "covariate columns")->delimiter(',');
    eff->add_option("--tree", eff_tree, "policy JSON");
    eff->add_option("--panel", panel_path, "long-format panel CSV for the fixed-effects ITT regression");
    eff->add_option("--split-covariate", split_covariate, "also run the panel regression on a median split");
    add_welfare(eff, eff_w);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        const unsigned threads = thread_count(g);
        if (*sim) {
            DgpSpec spec = dgp_preset(dgp);
            if (dim) spec.dim = *dim;
            if (law) {
                if (*law == "uniform") spec.covariates = CovariateLaw::Uniform;
                else if (*law == "normal") spec.covariates = CovariateLaw::Normal;
                else throw ConfigError("covariate law must be uniform or normal");
            }
            if (m_t) spec.m_T = parse_form(*m_t);
            if (m_nt) spec.m_NT = parse_form(*m_nt);
            if (sigma) spec.sigma = *sigma;
            if (noise) {
                if (*noise == "gaussian") spec.noise = NoiseLaw::Gaussian;
                else if (*noise == "laplace") spec.noise = NoiseLaw::Laplace;
                else throw ConfigError("noise must be gaussian or laplace");
            }
            if (selection) {
                if (*selection == "roy") spec.selection = Selection::Roy;
                else if (*selection == "logistic") spec.selection = Selection::Logistic;
                else throw ConfigError("selection must be roy or logistic");
            }
            if (intercept) spec.intercept = parse_form(*intercept);
            if (alignment) spec.alignment = parse_form(*alignment);
            if (!arm_shares.empty()) spec.arm_shares = {arm_shares[0], arm_shares[1], arm_shares[2]};
            if (base_level) spec.base_level = *base_level;
            spec.params = sim_w.params();
            const auto data = generate(spec, n, g.seed);
            const auto dir = out_dir(g);
            write_csv(data.data, dir / "data.csv");
            write_truth_csv(data, dir / "truth.csv");
            std::ostringstream summary;
            summary << "dgp: " << dgp << ", n " << n << ", seed " << g.seed << '\n' << spec.describe();
            const auto& c = data.data.arm_counts();
            summary << "realized arm counts NT/T/O: " << c[0] << '/' << c[1] << '/' << c[2] << '\n';
            csv::write_file(dir / "dgp.txt", summary.str());
            out << summary.str();
            return kOk;
        }

        if (*learn) {
            if (mode != "paternalistic" && mode != "mixed") throw ConfigError("mode must be paternalistic or mixed");
            const auto loaded = load(learn_d, err);
            const auto& ds = loaded.data;
            const auto params = learn_w.params();
            const auto w = build_welfare(ds, params, learn_w.baseline_diff, learn_w.demean);
            const auto props = sample_propensities(ds);
            SearchOptions so;
            so.min_leaf = learn_s.min_leaf;
            so.max_candidates = learn_s.max_candidates;
            so.threads = threads;
            const auto dir = out_dir(g);

            const std::array<Arm, 2> pat_arms{Arm::NT, Arm::T};
            const auto pat = exhaustive_search(w, ds, props, pat_arms, depth, so);
            const AssignmentPolicy g_pat(pat.tree);
            const auto nt = AssignmentPolicy::uniform(Arm::NT);
            const auto t = AssignmentPolicy::uniform(Arm::T);
            const auto o = AssignmentPolicy::uniform(Arm::O);

            json doc;
            doc["mode"] = mode;
            doc["n"] = ds.size();
            doc["propensities"] = {{"NT", props[0]}, {"T", props[1]}, {"O", props[2]}};
            std::vector<ReportRow> rows{
                {"Uniform no-treatment (100% NT)", "100% NT", &nt, &nt},
                {"Uniform treatment (100% T)", "100% T", &t, &nt},
                {"The purely autonomous policy (100% O)", "100% O", &o, &nt},
            };
            std::optional<AssignmentPolicy> g_mix;
            if (mode == "paternalistic") {
                write_tree(g_pat, ds.schema(), dir, "tree");
                doc["tree"] = json::parse(policy_to_json(g_pat));
                doc["in_sample_welfare"] = pat.welfare;
                rows.push_back({"The paternalistic assignment (G^pat)", label_with_shares(g_pat, ds), &g_pat, &nt});
                rows.push_back({"G^pat vs 100% T", "", &g_pat, &t});
                rows.push_back({"G^pat vs 100% O", "", &g_pat, &o});
            } else {
                const auto mix = two_step_search(w, ds, props, depth, so);
                g_mix.emplace(mix.tree);
                write_tree(*g_mix, ds.schema(), dir, "tree");
                write_tree(g_pat, ds.schema(), dir, "tree_paternalistic");
                doc["tree"] = json::parse(policy_to_json(*g_mix));
                doc["in_sample_welfare"] = mix.welfare;
                doc["start_pair"] = {std::string(to_string(mix.start_pair.first)),
                                     std::string(to_string(mix.start_pair.second))};
                doc["pairs"] = json::array();
                for (const auto& [pair, value] : mix.candidates)
                    doc["pairs"].push_back({{"pair", {std::string(to_string(pair.first)), std::string(to_string(pair.second))}},
                                            {"welfare", value}});
                rows.push_back({"The mix of paternalism and autonomy (G^mix)", label_with_shares(*g_mix, ds), &*g_mix, &nt});
                rows.push_back({"The paternalistic assignment (G^pat)", label_with_shares(g_pat, ds), &g_pat, &nt});
                rows.push_back({"G^mix vs 100% T", "", &*g_mix, &t});
                rows.push_back({"G^mix vs 100% O", "", &*g_mix, &o});
                rows.push_back({"G^mix vs G^pat", "", &*g_mix, &g_pat});
                out << "start pair: " << to_string(mix.start_pair.first) << ", " << to_string(mix.start_pair.second)
                    << '\n';
            }
            out << render_text((g_mix ? *g_mix : g_pat).as_tree(ds.schema()));
            write_gain_report(rows, ds, w, params, correction(learn_c, learn_w, g), dir, out, doc);
            return kOk;
        }

        if (*eval) {
            const auto loaded = load(eval_d, err);
            const auto& ds = loaded.data;
            const auto policy = read_policy(eval_tree, ds);
            const auto params = eval_w.params();
            const auto w = build_welfare(ds, params, eval_w.baseline_diff, eval_w.demean);
            const auto nt = AssignmentPolicy::uniform(Arm::NT);
            const auto dir = out_dir(g);
            json doc;
            doc["n"] = ds.size();
            doc["welfare"] = empirical_welfare(w, ds, policy, sample_propensities(ds));
            if (!truth.empty()) {
                const auto table = csv::read(truth);
                const auto cT = table.column("w_T"), cN = table.column("w_NT"), cZ = table.column("z_opt");
                if (!cT || !cN || !cZ) throw DataError("truth sidecar needs columns w_T,w_NT,z_opt");
                if (table.rows.size() != ds.size()) throw DataError("truth sidecar row count differs from the dataset");
                SimulatedData sim;
                for (const auto& r : table.rows) {
                    const auto a = csv::to_double(r[*cT]), b = csv::to_double(r[*cN]);
                    const auto z = parse_choice(r[*cZ]);
                    if (!a || !b || !z) throw DataError("bad truth sidecar row");
                    sim.w_T.push_back(*a);
                    sim.w_NT.push_back(*b);
                    sim.z_opt.push_back(*z);
                }
                sim.data = ds;
                const double tw = sidecar_welfare(sim, policy);
                const double tnt = sidecar_welfare(sim, nt);
                doc["true_welfare"] = tw;
                doc["true_gain_vs_NT"] = tw - tnt;
                out << "true in-sample welfare gain vs 100% NT: " << jpy(tw - tnt) << '\n';
            }
            std::vector<ReportRow> rows{{"Evaluated policy vs 100% NT", label_with_shares(policy, ds), &policy, &nt}};
            write_gain_report(rows, ds, w, params, correction(eval_c, eval_w, g), dir, out, doc);
            return kOk;
        }

        if (*eff) {
            const auto dir = out_dir(g);
            if (eff_data.empty() && panel_path.empty()) throw ConfigError("effects needs --data and --tree, or --panel");
            std::optional<LoadResult> loaded;
            if (!eff_data.empty()) loaded = load(DataFlags{eff_data, eff_cov}, err);
            if (!eff_data.empty() || !eff_tree.empty()) {
                if (eff_data.empty() || eff_tree.empty()) throw ConfigError("mechanism table needs both --data and --tree");
                const auto& ds = loaded->data;
                const auto policy = read_policy(eff_tree, ds);
                const auto w = build_welfare(ds, eff_w.params(), eff_w.baseline_diff, eff_w.demean);
                const auto report = mechanism_report(ds, w, policy);
                csv::write_file(dir / "mechanism.tsv", report.to_tsv());
                csv::write_file(dir / "mechanism.json", report.to_json());
                out << report.to_tsv();
            }
            if (!panel_path.empty()) {
                const auto panel = load_panel_csv(panel_path);
                std::vector<std::pair<std::string, std::vector<PanelObservation>>> groups{{"all", panel}};
                if (!split_covariate.empty()) {
                    if (!loaded) throw ConfigError("--split-covariate needs --data");
                    const auto& ds = loaded->data;
                    const auto k = ds.covariate_index(split_covariate);
                    std::vector<double> col(ds.size());
                    std::unordered_map<std::string, double> value;
                    for (std::size_t i = 0; i < ds.size(); ++i) {
                        col[i] = ds.x(i, k);
                        value[ds.id(i)] = col[i];
                    }
                    std::sort(col.begin(), col.end());
                    const double median = col.size() % 2 ? col[col.size() / 2]
                                                         : 0.5 * (col[col.size() / 2 - 1] + col[col.size() / 2]);
                    std::vector<PanelObservation> hi, lo;
                    for (const auto& obs : panel) {
                        const auto it = value.find(obs.household);
                        if (it == value.end()) continue;
                        (it->second >= median ? hi : lo).push_back(obs);
                    }
                    groups.push_back({split_covariate + " >= median", std::move(hi)});
                    groups.push_back({split_covariate + " < median", std::move(lo)});
                }
                std::ostringstream tsv;
                tsv << "Sample\ttau_T\tse\ttau_O\tse\tN\tHouseholds\tIntervals\n";
                json doc = json::array();
                for (const auto& [label, obs] : groups) {
                    const auto r = panel_itt(obs);
                    for (const auto& w : r.warnings) err << "warning (" << label << "): " << w << '\n';
                    char buf[256];
                    std::snprintf(buf, sizeof buf, "%.4f\t%.4f\t%.4f\t%.4f", r.tau_T.value, r.tau_T.se, r.tau_O.value,
                                  r.tau_O.se);
                    tsv << label << '\t' << buf << '\t' << r.observations << '\t' << r.households << '\t'
                        << r.intervals << '\n';
                    doc.push_back({{"sample", label},
                                   {"tau_T", estimate_json(r.tau_T)},
                                   {"tau_O", estimate_json(r.tau_O)},
                                   {"observations", r.observations},
                                   {"households", r.households},
                                   {"intervals", r.intervals},
                                   {"balanced", r.balanced}});
                }
                csv::write_file(dir / "panel_itt.tsv", tsv.str());
                csv::write_file(dir / "panel_itt.json", doc.dump(2) + "\n");
                out << tsv.str();
            }
            return kOk;
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kNumericError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kOk;
}

} // namespace ewm::cli
