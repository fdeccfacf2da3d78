#include "depbounds/cli.hpp"

#include "depbounds/dataset_io.hpp"
#include "depbounds/errors.hpp"
#include "depbounds/oracle.hpp"
#include "depbounds/set_inversion.hpp"
#include "depbounds/simulation.hpp"
#include "depbounds/time_combine.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <set>

namespace depbounds::cli {

namespace {

using nlohmann::json;

struct OptionSpec {
    const char* flag;
    const char* help;
};

// Flags that map one-to-one onto settings keys ("--n-boot" -> n_boot).
const std::vector<OptionSpec> kEstimateOptions = {
    {"--data", "CSV with columns y, delta and the covariates"},
    {"--schema", "covariate schema (INI or JSON)"},
    {"--link", "cox | aft"},
    {"--time", "time point t"},
    {"--coef", "coefficient index k (0 is the intercept)"},
    {"--alpha", "test level"},
    {"--n-boot", "bootstrap draws"},
    {"--family", "instrumental family, e.g. x1=spline:6,x2=indicator"},
    {"--mode", "auto | single | scan"},
    {"--root-finder", "binary | interp | grid"},
    {"--n-init", "initial grid size"},
    {"--tol", "root-finding tolerance"},
    {"--grid-step", "step of the grid root finder"},
    {"--box", "half width of the parameter box"},
    {"--kappa", "GMS threshold (default sqrt(log n))"},
    {"--lambda", "xi penalty weight (default log n)"},
    {"--epsilon", "box shrinkage (default sqrt(log log n / n))"},
    {"--seed", "random seed"},
    {"--threads", "worker threads (0: all cores)"},
    {"--out", "output JSON path (default stdout)"},
};

const std::vector<OptionSpec> kCombineExtra = {
    {"--times", "comma-separated time points"},
    {"--rule", "intersect | majority | weighted"},
    {"--threshold", "majority vote threshold"},
};

const std::vector<OptionSpec> kDesignOptions = {
    {"--link", "cox | aft"},
    {"--theta", "Frank copula parameter"},
    {"--censoring", "target censoring share"},
    {"--censoring-rate", "exponential censoring rate (skips calibration)"},
    {"--n", "sample size"},
    {"--family", "instrumental family"},
    {"--time", "time point t"},
    {"--coef", "coefficient index k"},
    {"--covariates", "independent | gaussian_copula"},
    {"--rho", "Gaussian copula correlation"},
    {"--seed", "random seed"},
    {"--threads", "worker threads (0: all cores)"},
    {"--out", "output JSON path (default stdout)"},
};

const std::vector<OptionSpec> kSimulateExtra = {
    {"--reps", "replications"},
    {"--n-boot", "bootstrap draws"},
    {"--alpha", "test level"},
    {"--times", "combine over these time points"},
    {"--rule", "intersect | majority | weighted"},
    {"--threshold", "majority vote threshold"},
    {"--mode", "single | scan"},
    {"--root-finder", "binary | interp | grid"},
    {"--n-init", "initial grid size"},
    {"--tol", "root-finding tolerance"},
    {"--reps-csv", "per-replication CSV path"},
};

const std::vector<OptionSpec> kOracleExtra = {
    {"--n-mc", "Monte-Carlo sample size"},
    {"--error", "target grid resolution"},
    {"--draws", "independent Monte-Carlo samples"},
    {"--grid-points", "initial grid points per coordinate"},
    {"--half-width", "initial grid half width"},
    {"--slack-se", "feasibility slack in standard errors"},
};

std::set<std::string> keys_of(const std::vector<std::vector<OptionSpec>>& groups)
{
    std::set<std::string> out;
    for (const auto& g : groups)
        for (const auto& o : g) out.insert(Settings::normalize_key(o.flag));
    return out;
}

Settings estimate_defaults()
{
    Settings s;
    for (auto [k, v] : std::vector<std::pair<const char*, const char*>>{
             {"link", "cox"}, {"time", "1"}, {"coef", "1"}, {"alpha", "0.05"}, {"n_boot", "600"}, {"family", ""},
             {"mode", "auto"}, {"root_finder", "binary"}, {"n_init", "100"}, {"box", "10"}, {"seed", "0"},
             {"threads", "1"}, {"trace", "false"}}) {
        s.set(k, v, "default");
    }
    return s;
}

Settings design_defaults()
{
    Settings s;
    for (auto [k, v] : std::vector<std::pair<const char*, const char*>>{
             {"link", "cox"}, {"theta", "0"}, {"censoring", "0.3"}, {"n", "500"},
             {"family", "x1=spline:6,x2=indicator"}, {"time", "1"}, {"coef", "1"}, {"covariates", "independent"},
             {"rho", "0.8"}, {"seed", "1"}, {"threads", "1"}}) {
        s.set(k, v, "default");
    }
    return s;
}

class Command {
public:
    Command(CLI::App& app, const std::string& name, const std::string& help, const std::string& file_flag,
            std::vector<std::vector<OptionSpec>> groups, bool trace)
        : groups_(std::move(groups))
    {
        sub_ = app.add_subcommand(name, help);
        sub_->add_option(file_flag, file_, "config file (INI or JSON)");
        for (const auto& g : groups_) {
            for (const auto& o : g) {
                std::string key = Settings::normalize_key(o.flag);
                if (opts_.count(key)) continue;
                opts_[key] = sub_->add_option(o.flag, values_[key], o.help);
            }
        }
        if (trace) trace_flag_ = sub_->add_flag("--trace", "record every test evaluation in the output");
        allowed_ = keys_of(groups_);
        if (trace) allowed_.insert("trace");
    }

    bool parsed() const { return sub_->parsed(); }

    Settings settings(const Settings& defaults, const EnvLookup& env) const
    {
        Settings s = defaults;
        if (!file_.empty()) {
            Settings f = load_settings(file_);
            f.check_keys(allowed_);
            s.merge(f);
        }
        s.merge(env_settings(env));
        for (const auto& [key, opt] : opts_) {
            if (opt->count() > 0) s.set(key, values_.at(key), "flag");
        }
        if (trace_flag_ && trace_flag_->count() > 0) s.set("trace", "true", "flag");
        if (!file_.empty()) s.set("config_file", file_, "flag");
        return s;
    }

private:
    CLI::App* sub_ = nullptr;
    std::vector<std::vector<OptionSpec>> groups_;
    std::string file_;
    std::map<std::string, std::string> values_;
    std::map<std::string, CLI::Option*> opts_;
    CLI::Option* trace_flag_ = nullptr;
    std::set<std::string> allowed_;
};

json to_json(const Eigen::VectorXd& v)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json to_json(const std::vector<Interval>& v)
{
    json a = json::array();
    for (const auto& iv : v) a.push_back(json::array({iv.lower, iv.upper}));
    return a;
}

json to_json(const std::vector<Evaluation>& cache)
{
    json a = json::array();
    for (const auto& e : cache) {
        a.push_back({{"r", e.r}, {"statistic", e.statistic}, {"critical_value", e.critical_value},
                     {"feasible", e.feasible()}});
    }
    return a;
}

json set_json(const IdentifiedSet& set)
{
    json d = {{"evaluations", set.diagnostics.evaluations},
              {"lower_at_boundary", set.diagnostics.lower_at_boundary},
              {"upper_at_boundary", set.diagnostics.upper_at_boundary},
              {"notes", set.diagnostics.notes}};
    return {{"status", to_string(set.status)}, {"intervals", to_json(set.intervals)}, {"diagnostics", d},
            {"cache", to_json(set.cache)}, {"k", set.k}, {"t", set.t}, {"alpha", set.alpha}};
}

json config_json(const Settings& s)
{
    json c = json::object();
    for (const auto& [k, v] : s.values()) c[k] = v;
    return c;
}

json histogram(const std::vector<double>& draws, int bins = 20)
{
    if (draws.empty()) return {{"edges", json::array()}, {"counts", json::array()}};
    auto [mn, mx] = std::minmax_element(draws.begin(), draws.end());
    double lo = *mn, hi = *mx;
    if (hi <= lo) hi = lo + 1.0;
    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    for (double d : draws) {
        int b = static_cast<int>((d - lo) / (hi - lo) * bins);
        counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))]++;
    }
    json edges = json::array();
    for (int b = 0; b <= bins; ++b) edges.push_back(lo + (hi - lo) * b / bins);
    return {{"edges", edges}, {"counts", counts}};
}

json outcome_json(const TestOutcome& o)
{
    json mins = json::array();
    for (const auto& m : o.minimizers) mins.push_back(to_json(m));
    json starts = json::array();
    for (const auto& s : o.starts) {
        json path = json::array();
        for (std::size_t i = 0; i < s.path.size(); ++i) {
            path.push_back({{"x", to_json(s.path[i])}, {"value", i < s.path_values.size() ? s.path_values[i] : 0.0}});
        }
        starts.push_back({{"start", to_json(s.start)}, {"end", to_json(s.end)}, {"value", s.value},
                          {"evaluations", s.evaluations}, {"path", path}});
    }
    return {{"r", o.r},
            {"statistic", o.statistic},
            {"critical_value", o.critical_value},
            {"reject", o.reject},
            {"minimizers", mins},
            {"evaluations", o.evaluations},
            {"draws", {{"min", o.draw_min}, {"median", o.draw_median}, {"max", o.draw_max}}},
            {"histogram", histogram(o.draws)},
            {"starts", starts}};
}

void emit(const json& j, const Settings& s, std::ostream& out)
{
    std::string text = j.dump(2) + "\n";
    if (auto path = s.find("out"); path && !path->empty()) {
        std::ofstream f(*path);
        if (!f) throw std::runtime_error("cannot write " + *path);
        f << text;
    } else {
        out << text;
    }
}

struct Problem {
    std::shared_ptr<const Dataset> data;
    FittedInstruments inst;
    LinkKind link;
    TestConfig test;
    InversionConfig inv;
    std::size_t k;
};

TestConfig test_config(const Settings& s, std::size_t dim)
{
    TestConfig t;
    t.alpha = s.get_double("alpha");
    t.n_boot = static_cast<int>(s.get_int("n_boot"));
    t.seed = static_cast<std::uint64_t>(s.get_int("seed"));
    t.box = ParameterBox::symmetric(dim, s.get_double("box"));
    if (s.has("kappa")) t.kappa = s.get_double("kappa");
    if (s.has("lambda")) t.lambda = s.get_double("lambda");
    if (s.has("epsilon")) t.epsilon = s.get_double("epsilon");
    t.trace = s.get_bool("trace");
    t.validate();
    return t;
}

InversionConfig inversion_config(const Settings& s)
{
    InversionConfig c;
    c.mode = parse_search_mode(s.get("mode"));
    c.root_finder = parse_root_finder(s.get("root_finder"));
    c.n_init = static_cast<int>(s.get_int("n_init"));
    if (s.has("tol")) c.tol = s.get_double("tol");
    if (s.has("grid_step")) c.grid_step = s.get_double("grid_step");
    c.threads = static_cast<int>(s.get_int("threads"));
    return c;
}

Problem load_problem(const Settings& s)
{
    if (!s.has("data")) throw std::invalid_argument("--data is required");
    if (!s.has("schema")) throw std::invalid_argument("--schema is required");
    Problem p;
    Schema schema = load_schema(s.get("schema"));
    p.data = std::make_shared<const Dataset>(load_dataset(std::filesystem::path(s.get("data")), schema));
    FamilySpec fs = s.get("family").empty() ? FamilySpec{} : parse_family_spec(s.get("family"));
    p.inst = fit_instruments(*p.data, fs);
    p.link = parse_link(s.get("link"));
    long long k = s.get_int("coef");
    if (k < 0 || static_cast<std::size_t>(k) > p.data->d()) throw std::invalid_argument("--coef out of range");
    p.k = static_cast<std::size_t>(k);
    p.test = test_config(s, p.data->d() + 1);
    p.inv = inversion_config(s);
    return p;
}

json instruments_json(const FittedInstruments& inst)
{
    return {{"count", inst.family.size()},
            {"dropped", inst.dropped},
            {"family", inst.family.provenance()},
            {"normalizer", inst.normalizer.describe()}};
}

void echo_family(Settings& s)
{
    if (s.get("family").empty()) s.set("family", to_string(FamilySpec{}), "default");
}

int run_estimate(Settings s, std::ostream& out)
{
    echo_family(s);
    Problem p = load_problem(s);
    MomentSystem sys(p.data, p.link, s.get_double("time"), p.inst.normalizer, p.inst.family);

    std::mutex mutex;
    std::map<double, TestOutcome> outcomes;
    OutcomeObserver observer;
    if (p.test.trace) {
        observer = [&](const TestOutcome& o) {
            std::lock_guard<std::mutex> lock(mutex);
            outcomes[o.r] = o;
        };
    }
    IdentifiedSet set = estimate_interval(sys, p.test, p.k, p.inv, observer);

    json j = set_json(set);
    j["command"] = "estimate";
    j["config"] = config_json(s);
    j["diagnostics"]["instruments"] = instruments_json(p.inst);
    if (p.test.trace) {
        // Only evaluations that made it into the cache, so the trace does not
        // depend on how the initial grid was batched over threads.
        json tr = json::array();
        for (const auto& e : set.cache) {
            auto it = outcomes.find(e.r);
            if (it != outcomes.end()) tr.push_back(outcome_json(it->second));
        }
        j["trace"] = tr;
    }
    emit(j, s, out);
    return set.status == SetStatus::Misspecified ? kExitMisspecified : kExitOk;
}

TimeGrid time_grid(const Settings& s)
{
    TimeGrid g;
    g.times = s.get_doubles("times");
    g.rule = parse_time_rule(s.get("rule"));
    g.threshold = s.get_double("threshold");
    g.validate();
    return g;
}

int run_combine(Settings s, std::ostream& out)
{
    if (!s.has("times")) throw std::invalid_argument("--times is required");
    echo_family(s);
    Problem p = load_problem(s);
    TimeGrid grid = time_grid(s);
    SystemFactory factory = [&](double t) {
        return MomentSystem(p.data, p.link, t, p.inst.normalizer, p.inst.family);
    };
    CombinedResult res = combine_over_times(factory, p.test, p.k, grid, p.inv);

    json j = set_json(res.combined);
    j["command"] = "combine";
    j["config"] = config_json(s);
    j["diagnostics"]["instruments"] = instruments_json(p.inst);
    j["levels"] = res.levels;
    json per = json::array();
    for (const auto& ps : res.per_time) per.push_back(set_json(ps));
    j["per_time"] = per;
    emit(j, s, out);
    return res.combined.status == SetStatus::Misspecified ? kExitMisspecified : kExitOk;
}

SimDesign design_from(const Settings& s)
{
    SimDesign d;
    d.link = parse_link(s.get("link"));
    d.theta = s.get_double("theta");
    d.censoring_target = s.get_double("censoring");
    if (s.has("censoring_rate")) d.censoring_rate = s.get_double("censoring_rate");
    d.n = static_cast<std::size_t>(s.get_int("n"));
    d.family = parse_family_spec(s.get("family"));
    d.t = s.get_double("time");
    d.coef = static_cast<std::size_t>(s.get_int("coef"));
    d.covariates = parse_covariate_model(s.get("covariates"));
    d.rho = s.get_double("rho");
    d.seed = static_cast<std::uint64_t>(s.get_int("seed"));
    if (s.has("reps")) d.reps = static_cast<int>(s.get_int("reps"));
    if (s.has("n_boot")) d.n_boot = static_cast<int>(s.get_int("n_boot"));
    if (s.has("alpha")) d.alpha = s.get_double("alpha");
    if (s.has("mode")) d.inversion.mode = parse_search_mode(s.get("mode"));
    if (s.has("root_finder")) d.inversion.root_finder = parse_root_finder(s.get("root_finder"));
    if (s.has("n_init")) d.inversion.n_init = static_cast<int>(s.get_int("n_init"));
    if (s.has("tol")) d.inversion.tol = s.get_double("tol");
    if (s.has("times")) d.times = time_grid(s);
    return d;
}

json metrics_json(const SimMetrics& m)
{
    return {{"mean_lower", m.mean_lower}, {"mean_upper", m.mean_upper}, {"var_width", m.var_width},
            {"sig", m.sig},           {"cov", m.cov},               {"used", m.used},
            {"misspecified", m.misspecified}, {"failed", m.failed}};
}

void write_reps_csv(const std::string& path, const std::vector<RepResult>& reps)
{
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "rep,status,lower,upper,pieces,censored,evaluations,error\n";
    for (const auto& r : reps) {
        std::string status = !r.ok ? "error" : to_string(r.status);
        std::string lo, hi;
        if (r.ok && !r.intervals.empty()) {
            lo = format_double(r.intervals.front().lower);
            hi = format_double(r.intervals.back().upper);
        }
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        f << r.rep << ',' << status << ',' << lo << ',' << hi << ',' << r.intervals.size() << ','
          << format_double(r.censored) << ',' << r.evaluations << ',' << err << '\n';
    }
}

int run_simulate(Settings s, std::ostream& out)
{
    if (!s.has("rule")) s.set("rule", "intersect", "default");
    if (!s.has("threshold")) s.set("threshold", "0.5", "default");
    SimDesign d = design_from(s);
    SimResult res = run_design(d, static_cast<int>(s.get_int("threads")));

    std::string csv;
    if (auto p = s.find("reps_csv")) {
        csv = *p;
    } else if (auto o = s.find("out"); o && !o->empty()) {
        std::filesystem::path op(*o);
        csv = (op.parent_path() / (op.stem().string() + "_reps.csv")).string();
    }
    if (!csv.empty()) write_reps_csv(csv, res.reps);

    json j = {{"command", "simulate"},
              {"config", config_json(s)},
              {"lambda", res.lambda},
              {"truth", beta_true(d.t)[static_cast<Eigen::Index>(d.coef)]},
              {"metrics", metrics_json(res.metrics)}};
    if (!csv.empty()) j["reps_csv"] = csv;
    emit(j, s, out);
    return kExitOk;
}

int run_oracle_cmd(const Settings& s, std::ostream& out)
{
    OracleConfig c;
    c.design = design_from(s);
    c.n_mc = static_cast<std::size_t>(s.get_int("n_mc"));
    c.error = s.get_double("error");
    c.draws = static_cast<int>(s.get_int("draws"));
    c.grid_points = static_cast<int>(s.get_int("grid_points"));
    c.half_width = s.get_double("half_width");
    c.slack_se = s.get_double("slack_se");
    c.threads = static_cast<int>(s.get_int("threads"));
    OracleResult r = run_oracle(c);

    json draws = json::array();
    for (const auto& g : r.per_draw) {
        json levels = json::array();
        for (const auto& l : g.levels) {
            levels.push_back({{"h", l.h}, {"lower", to_json(l.lower)}, {"upper", to_json(l.upper)},
                              {"feasible", l.feasible}, {"evaluations", l.evaluations}});
        }
        json dj = {{"empty", g.empty}, {"evaluations", g.evaluations}, {"truth_feasible", g.truth_feasible},
                   {"levels", levels}};
        if (!g.empty) {
            dj["lower"] = to_json(g.lower);
            dj["upper"] = to_json(g.upper);
        }
        draws.push_back(dj);
    }
    json j = {{"command", "oracle"}, {"config", config_json(s)}, {"lambda", r.lambda},
              {"status", r.empty ? "misspecified" : "feasible"}, {"per_draw", draws}};
    if (!r.empty) {
        const auto k = static_cast<Eigen::Index>(c.design.coef);
        j["lower"] = to_json(r.lower);
        j["upper"] = to_json(r.upper);
        j["interval"] = json::array({r.lower[k], r.upper[k]});
    }
    emit(j, s, out);
    return r.empty ? kExitMisspecified : kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env)
{
    CLI::App app{"Bounds on covariate effects in survival models under dependent censoring", "depbounds"};
    app.require_subcommand(1);
    Command estimate(app, "estimate", "identified interval for one coefficient", "--config",
                     {kEstimateOptions}, true);
    Command combine(app, "combine", "interval combined over several time points", "--config",
                    {kEstimateOptions, kCombineExtra}, true);
    Command simulate(app, "simulate", "replication study on a simulated design", "--design",
                     {kDesignOptions, kSimulateExtra}, false);
    Command oracle(app, "oracle", "population identified set of a simulated design", "--design",
                   {kDesignOptions, kOracleExtra}, false);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }

    try {
        if (estimate.parsed()) return run_estimate(estimate.settings(estimate_defaults(), env), out);
        if (combine.parsed()) {
            Settings d = estimate_defaults();
            d.set("rule", "intersect", "default");
            d.set("threshold", "0.5", "default");
            return run_combine(combine.settings(d, env), out);
        }
        if (simulate.parsed()) {
            Settings d = design_defaults();
            d.set("reps", "1", "default");
            d.set("n_boot", "600", "default");
            d.set("alpha", "0.05", "default");
            d.set("mode", "single", "default");
            d.set("root_finder", "binary", "default");
            d.set("n_init", "100", "default");
            return run_simulate(simulate.settings(d, env), out);
        }
        if (oracle.parsed()) {
            Settings d = design_defaults();
            d.set("n_mc", "50000", "default");
            d.set("error", "0.05", "default");
            d.set("draws", "5", "default");
            d.set("grid_points", "21", "default");
            d.set("half_width", "10", "default");
            d.set("slack_se", "3", "default");
            return run_oracle_cmd(oracle.settings(d, env), out);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}

int dispatch(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return dispatch(args, std::cout, std::cerr, process_env());
}

}  // namespace depbounds::cli
