// bingham: command-line front end.
//
// Exit codes: 0 ok, 2 usage or unreadable input, 3 numerical or sampler
// failure, 4 optimisation diverged.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bingham.hpp"

namespace fs = std::filesystem;
using namespace bingham;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitDivergence = 4;

std::uint64_t env_seed() {
  const char* s = std::getenv("BINGHAM_SEED");
  if (!s || !*s) return 0;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(std::string("BINGHAM_SEED is not an unsigned integer: ") + s);
  }
}

fs::path manifest_path(fs::path out) { return out.replace_extension(".manifest.json"); }

/// Options shared by every subcommand. Values are layered as
/// built-in defaults < BINGHAM_SEED < --config file < explicit flags.
struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  bool timing = false;

  double r = 0, omega_d = 0, d_fraction = 0;
  int n_min = 0, n = 0;
  CLI::Option* r_opt = nullptr;
  CLI::Option* omega_d_opt = nullptr;
  CLI::Option* d_fraction_opt = nullptr;
  CLI::Option* n_min_opt = nullptr;
  CLI::Option* n_opt = nullptr;

  Json config = Json::object();

  void add_base(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config with \"integrator\", \"fit\" and \"seed\" sections");
    seed_opt = app->add_option("--seed", seed, "RNG seed (default: config, then $BINGHAM_SEED, then 0)");
    app->add_flag("--timing", timing, "record wall time in the report and manifest");
  }

  void add_integrator(CLI::App* app, bool with_n = true) {
    r_opt = app->add_option("--r", r, "contour parameter r (>= 2)");
    omega_d_opt = app->add_option("--omega-d", omega_d, "contour parameter omega_d in [1/r, 1]");
    n_min_opt = app->add_option("--n-min", n_min, "N_min");
    if (with_n) n_opt = app->add_option("--n", n, "number of quadrature nodes per side (N)");
    d_fraction_opt = app->add_option("--d-fraction", d_fraction, "strip half-width as a fraction of c");
  }

  void load() {
    if (config_path.empty()) return;
    config = read_json_file(config_path);
    if (!config.is_object()) throw IoError(config_path + ": config must be a JSON object");
    for (const auto& [key, _] : config.items()) {
      if (key != "integrator" && key != "fit" && key != "seed")
        throw IoError(config_path + ": unknown top-level key '" + key + "'");
    }
  }

  std::uint64_t effective_seed() const {
    if (seed_opt && seed_opt->count()) return seed;
    if (config.contains("seed")) {
      if (!config["seed"].is_number_unsigned()) throw IoError("config 'seed' must be an unsigned integer");
      return config["seed"].get<std::uint64_t>();
    }
    return env_seed();
  }

  IntegratorConfig integrator() const {
    IntegratorConfig c;
    if (config.contains("integrator")) c = integrator_from_json(config["integrator"], c);
    if (r_opt && r_opt->count()) c.r = r;
    if (omega_d_opt && omega_d_opt->count()) c.omega_d = omega_d;
    if (n_min_opt && n_min_opt->count()) c.n_min = n_min;
    if (n_opt && n_opt->count()) c.n = n;
    if (d_fraction_opt && d_fraction_opt->count()) c.d_fraction = d_fraction;
    validate(c);
    return c;
  }
};

/// Fit flags shared by `fit` and `ablation`.
struct FitFlags {
  std::string loss, optimizer, init;
  int max_iters = 0, record_every = 0;
  double lr = 0, init_scale = 0;
  CLI::Option *loss_opt, *optimizer_opt, *init_opt, *max_iters_opt, *record_every_opt, *lr_opt, *init_scale_opt;

  void add(CLI::App* app) {
    loss_opt = app->add_option("--loss", loss, "bnll or qcqp (default bnll)")->check(CLI::IsMember({"bnll", "qcqp"}));
    optimizer_opt = app->add_option("--optimizer", optimizer, "gd, momentum or adam (default adam)")
                        ->check(CLI::IsMember({"gd", "momentum", "adam"}));
    init_opt = app->add_option("--init", init, "zero, a-init, a-true, a-unimodal or a parameter JSON file");
    max_iters_opt = app->add_option("--max-iters", max_iters, "iteration budget (default 20000)");
    record_every_opt = app->add_option("--record-every", record_every, "trace stride (default 100)");
    lr_opt = app->add_option("--lr", lr, "learning rate (default 0.3)");
    init_scale_opt = app->add_option("--init-scale", init_scale, "multiplier s on the initial parameter (default 1)");
  }

  /// Returns the config and the resolved name of the initial parameter.
  std::pair<FitConfig, std::string> resolve(const Common& common, const std::string& default_init) const {
    FitConfig c;
    std::string init_name = default_init;
    if (common.config.contains("fit")) {
      const Json& f = common.config["fit"];
      c = fit_config_from_json(f, c);
      if (f.contains("init")) {
        if (!f["init"].is_string()) throw IoError("config 'fit.init' must be a string");
        init_name = f["init"].get<std::string>();
      }
    }
    if (loss_opt->count()) c.loss = parse_loss_kind(loss);
    if (optimizer_opt->count()) c.optimizer = parse_optimizer(optimizer);
    if (init_opt->count()) init_name = init;
    if (max_iters_opt->count()) c.max_iters = max_iters;
    if (record_every_opt->count()) c.record_every = record_every;
    if (lr_opt->count()) c.learning_rate = lr;
    if (init_scale_opt->count()) c.init_scale = init_scale;
    c.integrator = common.integrator();
    c.init_theta = theta_from_matrix(resolve_init(init_name));
    return {c, init_name};
  }

  static Matrix4 resolve_init(const std::string& name) {
    if (name == "zero") return Matrix4::Zero();
    if (name == "a-init") return presets::a_init();
    if (name == "a-true") return presets::a_true();
    if (name == "a-unimodal") return presets::a_unimodal();
    return read_param_file(name).a();
  }
};

void write_manifest(const fs::path& out, const std::string& command, const Json& config, std::uint64_t seed,
                    std::vector<std::string> outputs, std::optional<double> wall) {
  RunManifest m;
  m.command = command;
  m.config = config;
  m.seed = seed;
  m.outputs = std::move(outputs);
  m.wall_time_s = wall;
  atomic_write(out, dump_json(manifest_to_json(m)));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string vector_line(const Vector4& v, int digits) {
  std::string s;
  for (int i = 0; i < 4; ++i) s += (i ? " " : "") + format_significant(v[i], digits);
  return s;
}

// ---------------------------------------------------------------------------

struct NormconstCmd {
  Common common;
  std::vector<double> lambda;
  std::string manifest;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("normconst", "normalising constant C(lambda) and dC/dlambda");
    sub->add_option("--lambda", lambda, "four eigenvalues")->required()->expected(4);
    sub->add_option("--manifest", manifest, "also write a run manifest to this path");
    common.add_base(sub);
    common.add_integrator(sub);
  }

  int run() {
    const auto t0 = std::chrono::steady_clock::now();
    common.load();
    const IntegratorConfig cfg = common.integrator();
    const Vector4 lam(lambda[0], lambda[1], lambda[2], lambda[3]);
    if (!lam.allFinite()) throw InvalidArgument("--lambda entries must be finite");
    const NormConstResult r = normalizing_constant(lam, cfg);
    std::cout << "C " << format_significant(r.C, 15) << '\n';
    std::cout << "dC/dlambda " << vector_line(r.dC, 15) << '\n';
    if (!manifest.empty()) {
      Json config{{"lambda", lambda}, {"integrator", integrator_to_json(cfg)}};
      write_manifest(manifest, "normconst", config, common.effective_seed(), {},
                     common.timing ? std::optional(seconds_since(t0)) : std::nullopt);
    }
    return kExitOk;
  }
};

struct SampleCmd {
  Common common;
  std::string param, out;
  std::size_t n = 0;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("sample", "draw quaternions from B(A) as JSON lines");
    sub->add_option("--param", param, "parameter JSON file")->required();
    sub->add_option("--n", n, "number of draws")->required()->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "output .jsonl file")->required();
    common.add_base(sub);
  }

  int run() {
    const auto t0 = std::chrono::steady_clock::now();
    common.load();
    const std::uint64_t seed = common.effective_seed();
    const BinghamParam p = read_param_file(param);
    const auto draws = sample(p, n, seed);
    atomic_write(out, samples_to_jsonl(draws));
    Json config{{"param", param}, {"A", param_to_json(p)["A"]}, {"n", n}};
    write_manifest(manifest_path(out), "sample", config, seed, {out},
                   common.timing ? std::optional(seconds_since(t0)) : std::nullopt);
    return kExitOk;
  }
};

struct FitCmd {
  Common common;
  FitFlags flags;
  std::string samples, truth, out, trace;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("fit", "fit a Bingham parameter to samples");
    sub->add_option("--samples", samples, "JSON-lines sample file")->required();
    sub->add_option("--truth", truth, "ground-truth parameter JSON; enables KLD and mode error in the trace");
    sub->add_option("--out", out, "report JSON path")->required();
    sub->add_option("--trace", trace, "trace CSV path (default: <out stem>.trace.csv)");
    flags.add(sub);
    common.add_base(sub);
    common.add_integrator(sub);
  }

  int run() {
    const auto t0 = std::chrono::steady_clock::now();
    common.load();
    const std::uint64_t seed = common.effective_seed();
    auto [cfg, init_name] = flags.resolve(common, "zero");
    cfg.seed = seed;
    const auto qs = read_samples_file(samples);
    if (qs.empty()) throw IoError(samples + ": no samples");
    std::optional<BinghamParam> gt;
    if (!truth.empty()) gt = read_param_file(truth);

    const fs::path trace_path = trace.empty() ? fs::path(out).replace_extension(".trace.csv") : fs::path(trace);
    Json config{{"samples", samples},
                {"truth", truth.empty() ? Json() : Json(truth)},
                {"init", init_name},
                {"fit", fit_config_to_json(cfg)},
                {"integrator", integrator_to_json(cfg.integrator)}};
    try {
      const FitReport rep = fit_distribution(qs, cfg, gt);
      atomic_write(out, dump_json(fit_report_to_json(rep, common.timing)));
      atomic_write(trace_path, trace_csv(rep));
    } catch (const DivergenceError& e) {
      const fs::path diag = fs::path(out).replace_extension(".divergence.json");
      const Json j{{"error", e.what()}, {"iteration", e.iteration()}, {"theta", e.theta()}};
      atomic_write(diag, dump_json(j));
      write_manifest(manifest_path(out), "fit", config, seed, {diag.string()},
                     common.timing ? std::optional(seconds_since(t0)) : std::nullopt);
      std::cerr << j.dump() << '\n';
      return kExitDivergence;
    }
    write_manifest(manifest_path(out), "fit", config, seed, {out, trace_path.string()},
                   common.timing ? std::optional(seconds_since(t0)) : std::nullopt);
    return kExitOk;
  }
};

struct KldCmd {
  Common common;
  std::string p_path, q_path, manifest;
  std::size_t mc = 0;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("kld", "KL(p || q) between two Bingham parameters");
    sub->add_option("--p", p_path, "parameter JSON for p")->required();
    sub->add_option("--q", q_path, "parameter JSON for q")->required();
    sub->add_option("--mc", mc, "also estimate by Monte Carlo with this many draws from p (>= 100)");
    sub->add_option("--manifest", manifest, "also write a run manifest to this path");
    common.add_base(sub);
    common.add_integrator(sub);
  }

  int run() {
    const auto t0 = std::chrono::steady_clock::now();
    common.load();
    const std::uint64_t seed = common.effective_seed();
    const IntegratorConfig cfg = common.integrator();
    const BinghamParam p = read_param_file(p_path);
    const BinghamParam q = read_param_file(q_path);
    const ContourIntegrator integrator(cfg);
    std::cout << "analytic " << format_double(kld_analytic(p, q, integrator)) << '\n';
    if (mc > 0) {
      const MonteCarloEstimate est = kld_monte_carlo(p, q, mc, seed, integrator);
      std::cout << "monte_carlo " << format_double(est.estimate) << " +- " << format_double(est.std_error) << '\n';
    }
    if (!manifest.empty()) {
      Json config{{"p", p_path}, {"q", q_path}, {"mc", mc}, {"integrator", integrator_to_json(cfg)}};
      write_manifest(manifest, "kld", config, seed, {},
                     common.timing ? std::optional(seconds_since(t0)) : std::nullopt);
    }
    return kExitOk;
  }
};

struct LossCmd {
  Common common;
  std::string param, samples, loss = "bnll";

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("loss", "mean loss and gradient of a parameter on a sample file");
    sub->add_option("--param", param, "parameter JSON file")->required();
    sub->add_option("--samples", samples, "JSON-lines sample file")->required();
    sub->add_option("--loss", loss, "bnll or qcqp")->check(CLI::IsMember({"bnll", "qcqp"}));
    common.add_base(sub);
    common.add_integrator(sub);
  }

  int run() {
    common.load();
    const BinghamParam p = read_param_file(param);
    const auto qs = read_samples_file(samples);
    if (qs.empty()) throw IoError(samples + ": no samples");
    const LossValue lv = parse_loss_kind(loss) == LossKind::bnll ? bnll_batch(p, qs, common.integrator())
                                                                  : qcqp_batch(p.a(), qs);
    const Json j{{"loss", loss},
                 {"value", lv.value},
                 {"gradient_reliable", lv.gradient_reliable},
                 {"grad_theta", theta_to_json(lv.grad_theta)}};
    std::cout << dump_json(j);
    return kExitOk;
  }
};

struct AblationCmd {
  Common common;
  FitFlags flags;
  std::string axis, out_dir;
  std::vector<double> values;
  int trials = 1, n_sample = 100;
  unsigned threads = 0;
  CLI::Option* n_sample_opt = nullptr;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("ablation", "sweep N_sample or the initial scale over random ground truths");
    sub->add_option("--axis", axis, "n-sample or init-scale")->required()->check(CLI::IsMember({"n-sample", "init-scale"}));
    sub->add_option("--values", values, "swept values")->required();
    sub->add_option("--trials", trials, "random ground truths per value")->check(CLI::PositiveNumber);
    sub->add_option("--out-dir", out_dir, "output directory")->required();
    n_sample_opt = sub->add_option("--n-sample", n_sample, "samples per fit when sweeping init-scale (default 100)");
    sub->add_option("--threads", threads, "worker threads (default: all cores); results do not depend on it");
    flags.add(sub);
    common.add_base(sub);
    common.add_integrator(sub);
  }

  int run() {
    const auto t0 = std::chrono::steady_clock::now();
    common.load();
    AblationConfig ac;
    ac.axis = axis == "n-sample" ? AblationAxis::n_sample : AblationAxis::init_scale;
    ac.values = values;
    ac.trials = trials;
    ac.seed = common.effective_seed();
    std::string init_name;
    std::tie(ac.fit, init_name) = flags.resolve(common, "a-init");
    ac.init = triu(ac.fit.init_theta);
    ac.init_scale = ac.fit.init_scale;
    ac.n_sample = n_sample;
    ac.threads = threads;
    if (ac.axis == AblationAxis::n_sample) {
      for (double v : values)
        if (!(v >= 1.0) || v != std::floor(v)) throw InvalidArgument("n-sample values must be positive integers");
    }

    const AblationResult res = ablation_sweep(ac);
    const fs::path dir(out_dir);
    const fs::path rows = dir / "ablation_rows.csv", summary = dir / "ablation_summary.csv",
                   errors = dir / "ablation_rows.errors";
    atomic_write(rows, ablation_rows_csv(res));
    atomic_write(summary, ablation_summary_csv(res));
    atomic_write(errors, ablation_errors(res));
    Json config{{"axis", axis},
                {"values", values},
                {"trials", trials},
                {"n_sample", n_sample},
                {"init", init_name},
                {"fit", fit_config_to_json(ac.fit)},
                {"integrator", integrator_to_json(ac.fit.integrator)}};
    write_manifest(dir / "manifest.json", "ablation", config, ac.seed,
                   {rows.string(), summary.string(), errors.string()},
                   common.timing ? std::optional(seconds_since(t0)) : std::nullopt);
    for (const auto& s : res.summary) {
      std::cout << format_double(s.value) << ": median " << format_significant(s.median, 6) << "  min "
                << format_significant(s.min, 6) << "  max " << format_significant(s.max, 6) << "  ("
                << s.trials_ok << "/" << trials << " ok)\n";
    }
    return kExitOk;
  }
};

struct KlBoundCmd {
  Common common;
  int trials = 100;
  double max_eigenvalue = 1500.0;
  std::string out;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("kl-bound", "check KL(B(A) || uniform) <= max{0.05, 1.5 ln |lambda|} on random A");
    sub->add_option("--trials", trials, "number of random parameters")->check(CLI::PositiveNumber);
    sub->add_option("--max-eigenvalue", max_eigenvalue, "eigenvalues drawn from [0, max)")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "optional CSV of every draw");
    common.add_base(sub);
    common.add_integrator(sub);
  }

  int run() {
    const auto t0 = std::chrono::steady_clock::now();
    common.load();
    const std::uint64_t seed = common.effective_seed();
    const KlBoundReport rep = empirical_kl_bound_check(trials, seed, common.integrator(), max_eigenvalue);
    if (!out.empty()) {
      std::string csv = "lambda_norm,kl,bound,violated\n";
      for (const auto& row : rep.rows) {
        csv += format_double(row.lambda_norm) + ',' + format_double(row.kl) + ',' + format_double(row.bound) + ',' +
               (row.violated ? "1" : "0") + '\n';
      }
      atomic_write(out, csv);
      Json config{{"trials", trials}, {"max_eigenvalue", max_eigenvalue},
                  {"integrator", integrator_to_json(common.integrator())}};
      write_manifest(manifest_path(out), "kl-bound", config, seed, {out},
                     common.timing ? std::optional(seconds_since(t0)) : std::nullopt);
    }
    std::cout << "violations " << rep.violations << " of " << trials << '\n';
    return kExitOk;
  }
};

struct PresetCmd {
  std::string name, out;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("preset", "write a reference parameter as JSON");
    sub->add_option("--name", name, "a-init, a-true or a-unimodal")
        ->required()
        ->check(CLI::IsMember({"a-init", "a-true", "a-unimodal"}));
    sub->add_option("--out", out, "output JSON path")->required();
  }

  int run() {
    atomic_write(out, dump_json(param_to_json(BinghamParam(FitFlags::resolve_init(name)))));
    return kExitOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bingham distribution on unit quaternions: normalising constant, sampling, losses, fitting"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  NormconstCmd normconst;
  SampleCmd sample_cmd;
  FitCmd fit;
  KldCmd kld;
  LossCmd loss;
  AblationCmd ablation;
  KlBoundCmd kl_bound;
  PresetCmd preset;
  normconst.add(app);
  sample_cmd.add(app);
  fit.add(app);
  kld.add(app);
  loss.add(app);
  ablation.add(app);
  kl_bound.add(app);
  preset.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand("normconst")) return normconst.run();
    if (app.got_subcommand("sample")) return sample_cmd.run();
    if (app.got_subcommand("fit")) return fit.run();
    if (app.got_subcommand("kld")) return kld.run();
    if (app.got_subcommand("loss")) return loss.run();
    if (app.got_subcommand("ablation")) return ablation.run();
    if (app.got_subcommand("kl-bound")) return kl_bound.run();
    if (app.got_subcommand("preset")) return preset.run();
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const SamplerError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitUsage;
}
