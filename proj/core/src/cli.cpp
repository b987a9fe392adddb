#include "cmo/cli.hpp"

#include "cmo/cohort.hpp"
#include "cmo/evaluation.hpp"
#include "cmo/io.hpp"
#include "cmo/parallel.hpp"
#include "cmo/prediction.hpp"
#include "cmo/solver.hpp"
#include "cmo/synth.hpp"

#include <json.hpp>

#include <fstream>
#include <ostream>
#include <sstream>

namespace cmo::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Terms travel as a string so the visitor below only sees plain types.
struct TermsField {
    KernelTerms* terms;
};

template <typename F>
void visit(RunConfig& c, F&& f) {
    f("seed", c.seed);
    f("threads", c.threads);
    f("cohort", c.cohort);
    f("out", c.out);
    f("model", c.model);
    f("residualize", c.residualize);
    f("check_psd", c.check_psd);
    f("matrix_format", c.matrix_format);
    f("score_name", c.score_name);
    f("method", c.method);
    f("lambda", c.hp.lambda);
    f("gamma1", c.hp.gamma1);
    f("gamma2", c.hp.gamma2);
    f("gamma3", c.hp.gamma3);
    f("rank", c.rank);
    f("prox_step", c.hp.prox_step);
    f("prox_iters", c.hp.prox_iters);
    f("dual_step", c.hp.dual_step);
    f("dual_step_decay", c.hp.dual_step_decay);
    f("outer_tol", c.hp.outer_tol);
    f("max_outer_iters", c.hp.max_outer_iters);
    f("constraint_tol", c.hp.constraint_tol);
    f("tr_delta0", c.hp.tr.delta0);
    f("tr_delta_max", c.hp.tr.delta_max);
    f("tr_eta_accept", c.hp.tr.eta_accept);
    f("tr_shrink", c.hp.tr.shrink);
    f("tr_expand", c.hp.tr.expand);
    f("tr_max_iters", c.hp.tr.max_iters);
    f("tr_grad_tol", c.hp.tr.grad_tol);
    f("tr_subproblem_max_iters", c.hp.tr.subproblem_max_iters);
    f("sigma_sq", c.kernel.sigma_sq);
    f("rho", c.kernel.rho);
    f("ell", c.kernel.ell);
    TermsField terms{&c.kernel.terms};
    f("kernel_terms", terms);
    f("synth_p", c.synth_p);
    f("synth_r", c.synth_r);
    f("synth_n", c.synth_n);
    f("synth_sparsity_x", c.synth_sparsity_x);
    f("synth_loading_scale", c.synth_loading_scale);
    f("synth_noise_sigma", c.synth_noise_sigma);
    f("synth_score_noise_sigma", c.synth_score_noise_sigma);
    f("synth_anchor_count", c.synth_anchor_count);
    f("synth_alpha_scale", c.synth_alpha_scale);
    f("folds", c.folds);
    f("mi_bins", c.mi_bins);
    f("grid_lambda", c.grid_lambda);
    f("grid_gamma1", c.grid_gamma1);
    f("grid_gamma2", c.grid_gamma2);
    f("grid_gamma3", c.grid_gamma3);
    f("grid_sigma_sq", c.grid_sigma_sq);
    f("grid_rho", c.grid_rho);
    f("grid_ell", c.grid_ell);
}

json to_json(const RunConfig& cfg) {
    json j = json::object();
    RunConfig copy = cfg;
    visit(copy, [&](const char* key, auto& ref) {
        using T = std::decay_t<decltype(ref)>;
        if constexpr (std::is_same_v<T, TermsField>) j[key] = to_string(*ref.terms);
        else j[key] = ref;
    });
    return j;
}

template <typename T>
void assign(const json& v, T& ref, const std::string& key) {
    try {
        if constexpr (std::is_same_v<T, TermsField>) {
            *ref.terms = kernel_terms_from_string(v.get<std::string>());
        } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw json::type_error::create(302, "expected a number", &v);
            ref = v.get<double>();
        } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
            if (!v.is_number_integer()) throw json::type_error::create(302, "expected an integer", &v);
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_integer() && v.get<std::int64_t>() < 0 && !v.is_number_unsigned())
                    throw json::type_error::create(302, "expected a nonnegative integer", &v);
            }
            ref = v.get<T>();
        } else {
            ref = v.get<T>();
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, "config key '" + key + "': " + e.what());
    }
}

void from_json(const json& j, RunConfig& cfg, const std::string& origin) {
    if (!j.is_object()) fail(ErrorKind::Parse, origin + ": expected a JSON object");
    const auto keys = config_keys();
    for (const auto& item : j.items()) {
        if (std::find(keys.begin(), keys.end(), item.key()) == keys.end())
            fail(ErrorKind::Parse, origin + ": unknown config key '" + item.key() + "'");
    }
    visit(cfg, [&](const char* key, auto& ref) {
        if (j.contains(key)) assign(j.at(key), ref, key);
    });
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    if (!text.empty() && text.front() == '[') {
        assign(json::parse(text, nullptr, false), out, key);
        return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            fail(ErrorKind::Parse, "config key '" + key + "': cannot parse '" + item + "'");
        }
    }
    return out;
}

// Fails fast on unusable paths.
void require_readable(const std::string& path, const char* what) {
    if (path.empty()) fail(ErrorKind::InvalidArgument, std::string("missing ") + what + " path");
    std::error_code ec;
    if (!fs::exists(path, ec))
        fail(ErrorKind::Io, std::string(what) + " '" + path + "' does not exist");
}

void require_cohort_dir(const std::string& path) {
    require_readable(path, "cohort");
    const fs::path manifest = fs::path(path) / "manifest";
    std::ifstream in(manifest);
    if (!in) fail(ErrorKind::Io, "cohort manifest '" + manifest.string() + "' is not readable");
}

void require_writable_dir(const std::string& path) {
    if (path.empty()) fail(ErrorKind::InvalidArgument, "missing out path");
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec || !fs::is_directory(path))
        fail(ErrorKind::Io, "output directory '" + path + "' cannot be created");
    const fs::path probe = fs::path(path) / ".cmo_write_probe";
    {
        std::ofstream out(probe);
        if (!out) fail(ErrorKind::Io, "output directory '" + path + "' is not writable");
    }
    fs::remove(probe, ec);
}

Hyperparams resolved_hp(const RunConfig& cfg, const CohortDataset& cohort, std::ostream& log) {
    Hyperparams hp = cfg.hp;
    hp.rank_r = cfg.rank > 0 ? cfg.rank : select_rank(cohort);
    if (cfg.rank <= 0) log << "rank: " << hp.rank_r << " (knee of the mean spectrum)\n";
    hp.validate(cohort.p());
    return hp;
}

CohortDataset read_cohort(const RunConfig& cfg) {
    return io::load_cohort(cfg.cohort, io::CohortLoadOptions{cfg.residualize, cfg.check_psd});
}

CvOptions cv_options(const RunConfig& cfg) {
    CvOptions o;
    o.folds = cfg.folds;
    o.seed = cfg.seed;
    o.threads = resolve_threads(cfg.threads);
    o.mi_bins = cfg.mi_bins;
    return o;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void run_synth(const RunConfig& cfg, const std::string& echo, std::ostream& log) {
    require_writable_dir(cfg.out);
    SynthConfig sc;
    sc.p = cfg.synth_p;
    sc.r = cfg.synth_r;
    sc.n = cfg.synth_n;
    sc.sparsity_x = cfg.synth_sparsity_x;
    sc.loading_scale = cfg.synth_loading_scale;
    sc.noise_sigma = cfg.synth_noise_sigma;
    sc.kernel = cfg.kernel;
    sc.score_noise_sigma = cfg.synth_score_noise_sigma;
    sc.anchor_count = cfg.synth_anchor_count;
    sc.alpha_scale = cfg.synth_alpha_scale;
    sc.seed = cfg.seed;
    auto [cohort, truth] = generate(sc);
    cohort.score_name = cfg.score_name;
    const fs::path out(cfg.out);
    io::save_cohort(out / "cohort", cohort,
                    io::CohortSaveOptions{io::matrix_format_from_string(cfg.matrix_format), false, echo});
    fs::create_directories(out / "truth");
    io::save_ground_truth(out / "truth", truth, echo);
    log << "wrote " << cohort.n() << " matrices (P = " << cohort.p() << ") to "
        << (out / "cohort").string() << "\n";
}

void run_fit(const RunConfig& cfg, const std::string& echo, std::ostream& log) {
    require_cohort_dir(cfg.cohort);
    require_writable_dir(cfg.out);
    const CohortDataset cohort = read_cohort(cfg);
    const Hyperparams hp = resolved_hp(cfg, cohort, log);
    FitOptions opts;
    opts.threads = resolve_threads(cfg.threads);
    auto [model, trace] = fit(cohort, hp, cfg.kernel, cfg.seed, opts);
    const fs::path out(cfg.out);
    io::save_model(out / "model.bin", model, echo);
    io::write_trace_csv(out / "trace.csv", trace, echo);
    const Vector pred = training_predictions(model);
    std::ofstream f(out / "train_predictions.csv");
    f << "# config: " << echo << "\nsample,y_true,y_pred\n";
    for (Index i = 0; i < pred.size(); ++i)
        f << i << ',' << fmt(cohort.scores(i)) << ',' << fmt(pred(i)) << '\n';
    log << "fit: " << model.summary.iterations << " passes, total_j "
        << fmt(model.summary.final_total_j) << ", residual "
        << fmt(model.summary.final_constraint_residual)
        << (model.summary.converged ? ", converged\n" : ", not converged\n");
}

void run_predict(const RunConfig& cfg, const std::string& echo, std::ostream& log) {
    require_readable(cfg.model, "model");
    require_cohort_dir(cfg.cohort);
    require_writable_dir(cfg.out);
    const FittedModel model = io::load_model(cfg.model);
    const CohortDataset cohort = read_cohort(cfg);
    if (cohort.p() != model.basis_x.rows()) {
        fail(ErrorKind::DimensionMismatch, "cohort P = " + std::to_string(cohort.p()) +
                                               " but the model basis has P = " +
                                               std::to_string(model.basis_x.rows()));
    }
    std::ofstream f(fs::path(cfg.out) / "predictions.csv");
    f << "# config: " << echo << "\nsample,y_true,y_pred";
    for (Index r = 0; r < model.basis_x.cols(); ++r) f << ",c" << r;
    f << '\n';
    for (Index i = 0; i < cohort.n(); ++i) {
        const UnseenPrediction p = predict_unseen(cohort.matrices[static_cast<std::size_t>(i)], model);
        f << i << ',' << fmt(cohort.scores(i)) << ',' << fmt(p.score);
        for (Index r = 0; r < p.loading.size(); ++r) f << ',' << fmt(p.loading(r));
        f << '\n';
    }
    log << "predicted " << cohort.n() << " patients\n";
}

void run_cv(const RunConfig& cfg, const std::string& echo, std::ostream& log) {
    require_cohort_dir(cfg.cohort);
    require_writable_dir(cfg.out);
    if (cfg.method != "cmo" && cfg.method != "decoupled")
        fail(ErrorKind::InvalidArgument, "method must be 'cmo' or 'decoupled', got '" + cfg.method + "'");
    const CohortDataset cohort = read_cohort(cfg);
    const Hyperparams hp = resolved_hp(cfg, cohort, log);
    const EvalReport report = cfg.method == "cmo"
                                  ? cross_validate(cohort, hp, cfg.kernel, cv_options(cfg))
                                  : decoupled_baseline(cohort, hp, cfg.kernel, cv_options(cfg));
    const fs::path out(cfg.out);
    io::write_report_csv(out / "report.csv", report, echo);
    io::write_predictions_csv(out / "predictions.csv", report, echo);
    log << report.method << ": test MAE " << fmt(report.mae_test) << ", test MI "
        << fmt(report.mi_test) << " bits\n";
}

void run_sweep(const RunConfig& cfg, const std::string& echo, std::ostream& log) {
    require_cohort_dir(cfg.cohort);
    require_writable_dir(cfg.out);
    const CohortDataset cohort = read_cohort(cfg);
    const Hyperparams hp = resolved_hp(cfg, cohort, log);
    SweepGrid grid{cfg.grid_lambda, cfg.grid_gamma1, cfg.grid_gamma2, cfg.grid_gamma3,
                   cfg.grid_sigma_sq, cfg.grid_rho, cfg.grid_ell};
    const auto entries = grid_sweep(cohort, hp, cfg.kernel, grid, cv_options(cfg));
    io::write_sweep_csv(fs::path(cfg.out) / "sweep.csv", entries, echo);
    log << "swept " << entries.size() << " configurations";
    if (!entries.empty() && entries.front().ok)
        log << ", best test MAE " << fmt(entries.front().mae_test);
    log << '\n';
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    RunConfig dummy;
    visit(dummy, [&](const char* key, auto&) { keys.emplace_back(key); });
    return keys;
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Parse, origin + ": " + e.what());
    }
    RunConfig cfg;
    from_json(j, cfg, origin);
    return cfg;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot read config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    bool found = false;
    visit(cfg, [&](const char* name, auto& ref) {
        if (key != name) return;
        found = true;
        using T = std::decay_t<decltype(ref)>;
        if constexpr (std::is_same_v<T, std::string>) {
            ref = value;
        } else if constexpr (std::is_same_v<T, TermsField>) {
            *ref.terms = kernel_terms_from_string(value);
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            ref = parse_list(key, value);
        } else {
            const json v = json::parse(value, nullptr, false);
            if (v.is_discarded())
                fail(ErrorKind::Parse, "config key '" + key + "': cannot parse '" + value + "'");
            assign(v, ref, key);
        }
    });
    if (!found) fail(ErrorKind::InvalidArgument, "unknown config key '" + key + "'");
}

std::string config_echo(const RunConfig& cfg) { return to_json(cfg).dump(); }

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return 2;
        case ErrorKind::DimensionMismatch: return 3;
        case ErrorKind::Asymmetric: return 4;
        case ErrorKind::NotPsd: return 5;
        case ErrorKind::NonFinite: return 6;
        case ErrorKind::NoKnee: return 7;
        case ErrorKind::NumericalFailure: return 8;
        case ErrorKind::Diverged: return 9;
        case ErrorKind::Parse: return 10;
        case ErrorKind::Io: return 11;
    }
    return 1;
}

namespace {

int error_record(std::ostream& err, const std::string& command, const std::string& kind,
                 const std::string& what, int code) {
    err << json{{"error", what}, {"kind", kind}, {"exit_code", code}, {"command", command}}.dump()
        << '\n';
    return code;
}

}  // namespace

int run_command(const std::string& command, const RunConfig& cfg, std::ostream& log,
                std::ostream& err) {
    auto report = [&](const std::string& kind, const std::string& what, int code) {
        return error_record(err, command, kind, what, code);
    };
    try {
        const std::string echo = config_echo(cfg);
        if (command == "synth") run_synth(cfg, echo, log);
        else if (command == "fit") run_fit(cfg, echo, log);
        else if (command == "predict") run_predict(cfg, echo, log);
        else if (command == "cv") run_cv(cfg, echo, log);
        else if (command == "sweep") run_sweep(cfg, echo, log);
        else fail(ErrorKind::InvalidArgument, "unknown command '" + command + "'");
        return 0;
    } catch (const Error& e) {
        return report(std::string(to_string(e.kind())), e.what(), exit_code(e.kind()));
    } catch (const std::exception& e) {
        return report("internal", e.what(), 1);
    }
}

int run_cli(const std::string& command, const std::string& config_path,
            const std::vector<std::pair<std::string, std::string>>& overrides, std::ostream& log,
            std::ostream& err) {
    RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = load_config(config_path);
        for (const auto& [key, value] : overrides) set_config_key(cfg, key, value);
    } catch (const Error& e) {
        return error_record(err, command, std::string(to_string(e.kind())), e.what(),
                            exit_code(e.kind()));
    }
    return run_command(command, cfg, log, err);
}

}  // namespace cmo::cli
