#include "codiff/config.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace codiff {

using nlohmann::json;

const std::map<std::string, std::set<std::string>>& config_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"", {"schema_version", "seed", "output_dir", "model", "loop", "optimizer", "sampler", "diffusion", "sequential",
            "evaluation"}},
      {"model",
       {"id", "a", "sigma", "prior_mean", "prior_sd", "bound", "alpha", "background", "max_signal", "grid",
        "half_width", "scale_x", "scale_y", "prior"}},
      {"model.prior[]", {"weight", "mean", "sd"}},
      {"loop",
       {"algorithm", "t_outer", "joint_steps", "contrastive_steps", "n_joint", "n_contrastive", "estimator", "resample",
        "joint_mode", "reinitialize", "max_consecutive_skips", "row_policy", "initial_design"}},
      {"optimizer", {"lr0", "decay", "transition_steps", "beta1", "beta2", "epsilon", "bounds"}},
      {"optimizer.bounds", {"lo", "hi"}},
      {"sampler", {"joint_step", "contrastive_step", "posterior_step", "posterior_steps", "digs"}},
      {"sampler.step", {"gamma0", "decay", "floor"}},
      {"sampler.digs", {"noise_scale", "denoise_steps", "denoise_step_size"}},
      {"diffusion", {"enabled", "beta_min", "beta_max", "t0", "horizon", "n_steps", "method", "ess_fraction"}},
      {"sequential", {"experiments", "theta_star", "random_baseline"}},
      {"evaluation", {"contrastive", "replications", "sequence_csv", "diagnostics"}},
      {"evaluation.diagnostics",
       {"estimators", "designs", "budgets", "replications", "ula_steps", "ula_gamma", "fd_outer", "fd_inner",
        "fd_step"}},
  };
  return keys;
}

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

// Typed, bounds-checked access to one JSON object; unknown keys are rejected on construction.
class Section {
 public:
  Section(const json& obj, std::string path, const std::string& key_set) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(display(), "expected an object");
    const auto& allowed = config_keys().at(key_set);
    for (const auto& [key, value] : obj_.items())
      if (!allowed.contains(key)) fail(at(key), "unknown key");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }
  const json& raw(const std::string& key) const { return obj_.at(key); }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_number()) fail(at(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(at(key), "expected a finite number");
    return x;
  }

  double positive(const std::string& key, double fallback) const {
    const double x = number(key, fallback);
    if (!(x > 0.0)) fail(at(key), "must be positive");
    return x;
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback, std::uint64_t min = 0) const {
    if (!has(key)) return fallback;
    const json& v = obj_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      fail(at(key), "expected a non-negative integer");
    const auto x = v.get<std::uint64_t>();
    if (x < min) fail(at(key), "must be at least " + std::to_string(min));
    return x;
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!obj_.at(key).is_boolean()) fail(at(key), "expected true or false");
    return obj_.at(key).get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    if (!obj_.at(key).is_string()) fail(at(key), "expected a string");
    return obj_.at(key).get<std::string>();
  }

  std::string choice(const std::string& key, const std::string& fallback, const std::set<std::string>& options) const {
    const std::string v = string(key, fallback);
    if (!options.contains(v)) {
      std::string list;
      for (const auto& o : options) list += (list.empty() ? "" : ", ") + o;
      fail(at(key), "expected one of {" + list + "}, got '" + v + "'");
    }
    return v;
  }

  Vec vec(const std::string& key) const { return to_vec(obj_.at(key), at(key)); }

  /// A number broadcast to n entries, or an array of length n.
  Vec vec_or_scalar(const std::string& key, Eigen::Index n) const {
    const json& v = obj_.at(key);
    if (v.is_number()) return Vec::Constant(n, number(key, 0.0));
    Vec out = vec(key);
    if (out.size() != n) fail(at(key), "expected " + std::to_string(n) + " entries");
    return out;
  }

  static Vec to_vec(const json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) fail(path, "expected a non-empty array of numbers");
    Vec out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) fail(path + "[" + std::to_string(i) + "]", "expected a number");
      out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
    }
    if (!out.allFinite()) fail(path, "entries must be finite");
    return out;
  }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const json& obj_;
  std::string path_;
};

StepSchedule parse_step(const Section& parent, const std::string& key, StepSchedule s) {
  if (!parent.has(key)) return s;
  const Section sec(parent.raw(key), parent.at(key), "sampler.step");
  s.gamma0 = sec.positive("gamma0", s.gamma0);
  s.decay = sec.number("decay", s.decay);
  s.floor = sec.number("floor", s.floor);
  if (!(s.decay > 0.0 && s.decay <= 1.0)) fail(sec.at("decay"), "must lie in (0, 1]");
  if (s.floor < 0.0) fail(sec.at("floor"), "must be non-negative");
  return s;
}

void parse_model(const Section& sec, ModelConfig& m) {
  m.id = sec.choice("id", m.id, {"linear_gaussian", "source_location", "smooth_mask"});
  const auto reject = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys)
      if (sec.has(k)) fail(sec.at(k), "not a parameter of model '" + m.id + "'");
  };
  if (m.id == "linear_gaussian") {
    reject({"alpha", "background", "max_signal", "grid", "half_width", "scale_x", "scale_y", "prior"});
    auto& p = m.linear_gaussian;
    p.a = sec.number("a", p.a);
    p.sigma = sec.positive("sigma", p.sigma);
    p.prior_mean = sec.has("prior_mean") ? sec.number("prior_mean", 0.0) : p.prior_mean;
    p.prior_sd = sec.positive("prior_sd", p.prior_sd);
    p.bound = sec.positive("bound", p.bound);
  } else if (m.id == "source_location") {
    reject({"a", "grid", "half_width", "scale_x", "scale_y", "prior"});
    auto& p = m.source;
    if (sec.has("alpha")) p.consts.alpha = sec.vec("alpha");
    if ((p.consts.alpha.array() <= 0.0).any()) fail(sec.at("alpha"), "source strengths must be positive");
    p.consts.background = sec.number("background", p.consts.background);
    p.consts.max_signal = sec.positive("max_signal", p.consts.max_signal);
    if (p.consts.background < 0.0) fail(sec.at("background"), "must be non-negative");
    p.sigma = sec.positive("sigma", p.sigma);
    p.prior_sd = sec.positive("prior_sd", p.prior_sd);
    p.bound = sec.positive("bound", p.bound);
    const Eigen::Index dim = 2 * p.consts.sources();
    p.prior_mean = sec.has("prior_mean") ? sec.vec_or_scalar("prior_mean", dim) : Vec::Zero(dim);
  } else {
    reject({"a", "prior_mean", "prior_sd", "bound", "alpha", "background", "max_signal"});
    auto& p = m.mask;
    p.grid = static_cast<int>(sec.count("grid", static_cast<std::uint64_t>(p.grid), 2));
    p.shape.half_width = sec.positive("half_width", p.shape.half_width);
    p.shape.scale_x = sec.positive("scale_x", p.shape.scale_x);
    p.shape.scale_y = sec.positive("scale_y", p.shape.scale_y);
    p.sigma = sec.positive("sigma", p.sigma);
    const Eigen::Index dim = static_cast<Eigen::Index>(p.grid) * p.grid;
    m.mask_prior.clear();
    if (sec.has("prior")) {
      const json& comps = sec.raw("prior");
      if (!comps.is_array() || comps.empty()) fail(sec.at("prior"), "expected a non-empty array of components");
      for (std::size_t i = 0; i < comps.size(); ++i) {
        const Section c(comps[i], sec.at("prior") + "[" + std::to_string(i) + "]", "model.prior[]");
        if (!c.has("mean") || !c.has("sd")) fail(c.at("mean"), "components need mean and sd");
        GaussianMixture::Component comp;
        comp.weight = c.positive("weight", 1.0);
        comp.mean = c.vec_or_scalar("mean", dim);
        comp.sd = c.vec_or_scalar("sd", dim);
        if ((comp.sd.array() <= 0.0).any()) fail(c.at("sd"), "must be positive");
        m.mask_prior.push_back(std::move(comp));
      }
    }
  }
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
  const Section root(doc, "", "");
  if (!root.has("schema_version")) fail("schema_version", "required");
  const auto version = root.count("schema_version", 0);
  if (version != static_cast<std::uint64_t>(kRunConfigSchemaVersion))
    fail("schema_version", "unsupported version " + std::to_string(version));
  RunConfig cfg;
  cfg.seed = root.count("seed", cfg.seed);
  cfg.output_dir = root.string("output_dir", cfg.output_dir);

  if (root.has("model")) parse_model(Section(root.raw("model"), "model", "model"), cfg.model);
  std::unique_ptr<Model> model;
  try {
    model = make_model(cfg.model);
  } catch (const ContractViolation& e) {
    fail("model", e.what());
  }

  if (root.has("loop")) {
    const Section sec(root.raw("loop"), "loop", "loop");
    auto& l = cfg.loop;
    cfg.algorithm = sec.choice("algorithm", "single", {"single", "nested"}) == "nested" ? LoopAlgorithm::nested
                                                                                         : LoopAlgorithm::single;
    l.t_outer = sec.count("t_outer", l.t_outer);
    l.joint_steps = sec.count("joint_steps", l.joint_steps, 1);
    l.contrastive_steps = sec.count("contrastive_steps", l.contrastive_steps, 1);
    l.n_joint = sec.count("n_joint", l.n_joint, 1);
    l.n_contrastive = sec.count("n_contrastive", l.n_contrastive, 1);
    l.estimator = estimator_kind_from_string(sec.choice("estimator", "pooled", {"pooled", "nested", "prior_is"}));
    l.resample = sec.choice("resample", "none", {"none", "incremental"}) == "incremental" ? ResamplePolicy::incremental
                                                                                          : ResamplePolicy::none;
    l.joint_mode = sec.choice("joint_mode", "split", {"split", "full_joint"}) == "full_joint" ? JointMode::full_joint
                                                                                             : JointMode::split;
    l.reinitialize = sec.boolean("reinitialize", l.reinitialize);
    l.max_consecutive_skips = sec.count("max_consecutive_skips", l.max_consecutive_skips);
    l.row_policy = sec.choice("row_policy", "uniform_fallback", {"raise", "uniform_fallback"}) == "raise"
                       ? DegenerateRowPolicy::raise
                       : DegenerateRowPolicy::uniform_fallback;
    if (sec.has("initial_design")) {
      cfg.initial_design = sec.vec("initial_design");
      if (cfg.initial_design->size() != model->design_dim())
        fail(sec.at("initial_design"), "expected " + std::to_string(model->design_dim()) + " entries");
    }
  }

  if (root.has("optimizer")) {
    const Section sec(root.raw("optimizer"), "optimizer", "optimizer");
    auto& a = cfg.adam;
    a.lr0 = sec.positive("lr0", a.lr0);
    a.decay = sec.positive("decay", a.decay);
    a.transition_steps = sec.positive("transition_steps", a.transition_steps);
    a.beta1 = sec.number("beta1", a.beta1);
    a.beta2 = sec.number("beta2", a.beta2);
    a.epsilon = sec.positive("epsilon", a.epsilon);
    try {
      a.validate();
    } catch (const ContractViolation& e) {
      fail("optimizer", e.what());
    }
    if (sec.has("bounds")) {
      const Section b(sec.raw("bounds"), sec.at("bounds"), "optimizer.bounds");
      if (!b.has("lo") || !b.has("hi")) fail(sec.at("bounds"), "needs lo and hi");
      const Vec lo = b.vec_or_scalar("lo", model->design_dim());
      const Vec hi = b.vec_or_scalar("hi", model->design_dim());
      if ((lo.array() > hi.array()).any()) fail(sec.at("bounds"), "lo exceeds hi");
      cfg.bounds = Box(lo, hi);
    }
  }

  if (root.has("sampler")) {
    const Section sec(root.raw("sampler"), "sampler", "sampler");
    cfg.loop.joint_step = parse_step(sec, "joint_step", cfg.loop.joint_step);
    cfg.loop.contrastive_step = parse_step(sec, "contrastive_step", cfg.loop.contrastive_step);
    cfg.posterior_step = parse_step(sec, "posterior_step", cfg.posterior_step);
    cfg.posterior_steps = sec.count("posterior_steps", cfg.posterior_steps);
    if (sec.has("digs")) {
      const Section d(sec.raw("digs"), sec.at("digs"), "sampler.digs");
      DigsConfig digs;
      digs.noise_scale = d.positive("noise_scale", digs.noise_scale);
      digs.denoise_steps = static_cast<int>(d.count("denoise_steps", static_cast<std::uint64_t>(digs.denoise_steps), 1));
      digs.denoise_step_size = d.positive("denoise_step_size", digs.denoise_step_size);
      cfg.loop.digs = digs;
    }
  }

  if (root.has("diffusion")) {
    const Section sec(root.raw("diffusion"), "diffusion", "diffusion");
    cfg.diffusion_enabled = sec.boolean("enabled", true);
    auto& s = cfg.schedule;
    s.beta_min = sec.positive("beta_min", s.beta_min);
    s.beta_max = sec.positive("beta_max", s.beta_max);
    s.t0 = sec.number("t0", s.t0);
    s.horizon = sec.number("horizon", s.horizon);
    s.n_steps = static_cast<int>(sec.count("n_steps", static_cast<std::uint64_t>(s.n_steps), 1));
    if (s.beta_max < s.beta_min) fail(sec.at("beta_max"), "must be at least beta_min");
    if (!(s.horizon > s.t0)) fail(sec.at("horizon"), "must exceed t0");
    const std::string method = sec.choice("method", "twisted", {"twisted", "fps", "fps_resampled"});
    cfg.pass.method = method == "fps"             ? ConditionalMethod::fps
                      : method == "fps_resampled" ? ConditionalMethod::fps_resampled
                                                  : ConditionalMethod::twisted;
    cfg.pass.ess_fraction = sec.number("ess_fraction", cfg.pass.ess_fraction);
    if (cfg.pass.ess_fraction < 0.0 || cfg.pass.ess_fraction > 1.0) fail(sec.at("ess_fraction"), "must lie in [0, 1]");
    if (cfg.diffusion_enabled && !make_oracle(cfg.model))
      fail("diffusion.enabled", "model '" + cfg.model.id + "' has no closed-form score oracle");
  }

  if (root.has("sequential")) {
    const Section sec(root.raw("sequential"), "sequential", "sequential");
    cfg.experiments = sec.count("experiments", cfg.experiments);
    cfg.random_baseline = sec.boolean("random_baseline", cfg.random_baseline);
    if (sec.has("theta_star")) {
      cfg.theta_star = sec.vec("theta_star");
      if (cfg.theta_star->size() != model->theta_dim())
        fail(sec.at("theta_star"), "expected " + std::to_string(model->theta_dim()) + " entries");
    }
  }

  if (root.has("evaluation")) {
    const Section sec(root.raw("evaluation"), "evaluation", "evaluation");
    cfg.metrics.contrastive = sec.count("contrastive", cfg.metrics.contrastive, 1);
    cfg.metrics.replications = sec.count("replications", cfg.metrics.replications, 1);
    if (sec.has("sequence_csv")) cfg.sequence_csv = sec.string("sequence_csv", "");
    if (sec.has("diagnostics")) {
      const Section d(sec.raw("diagnostics"), sec.at("diagnostics"), "evaluation.diagnostics");
      auto& dc = cfg.diagnostics;
      if (d.has("estimators")) {
        const json& list = d.raw("estimators");
        if (!list.is_array() || list.empty()) fail(d.at("estimators"), "expected a non-empty array");
        dc.estimators.clear();
        for (const auto& e : list) {
          if (!e.is_string()) fail(d.at("estimators"), "expected estimator names");
          try {
            dc.estimators.push_back(diagnostic_estimator_from_string(e.get<std::string>()));
          } catch (const ContractViolation& err) {
            fail(d.at("estimators"), err.what());
          }
        }
      }
      if (d.has("designs")) {
        const json& list = d.raw("designs");
        if (!list.is_array() || list.empty()) fail(d.at("designs"), "expected a non-empty array");
        for (std::size_t i = 0; i < list.size(); ++i) {
          const std::string path = d.at("designs") + "[" + std::to_string(i) + "]";
          Vec xi = list[i].is_number() ? Vec::Constant(1, list[i].get<double>()) : Section::to_vec(list[i], path);
          if (xi.size() != model->design_dim()) fail(path, "design dimension mismatch");
          dc.designs.push_back(std::move(xi));
        }
      }
      if (d.has("budgets")) {
        const json& list = d.raw("budgets");
        if (!list.is_array() || list.empty()) fail(d.at("budgets"), "expected a non-empty array");
        dc.budgets.clear();
        for (const auto& b : list) {
          if (!b.is_number_unsigned() || b.get<std::uint64_t>() == 0) fail(d.at("budgets"), "expected positive integers");
          dc.budgets.push_back(b.get<std::size_t>());
        }
      }
      dc.replications = d.count("replications", dc.replications, 2);
      dc.ula_steps = d.count("ula_steps", dc.ula_steps);
      dc.ula_gamma = d.positive("ula_gamma", dc.ula_gamma);
      dc.fd_outer = d.count("fd_outer", dc.fd_outer, 1);
      dc.fd_inner = d.count("fd_inner", dc.fd_inner, 1);
      dc.fd_step = d.positive("fd_step", dc.fd_step);
    }
  }
  if (cfg.diagnostics.designs.empty()) cfg.diagnostics.designs.push_back(model->default_bounds().hi * 0.5);
  try {
    sequential_config(cfg, false).validate();
    cfg.diagnostics.validate();
    cfg.schedule.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ConfigError(path + ": cannot open config file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": malformed JSON: " + e.what());
  }
  return parse_run_config(doc);
}

namespace {

GaussianMixture mask_prior(const ModelConfig& cfg) {
  if (!cfg.mask_prior.empty()) return GaussianMixture(cfg.mask_prior);
  const Eigen::Index dim = static_cast<Eigen::Index>(cfg.mask.grid) * cfg.mask.grid;
  return GaussianMixture({{0.5, Vec::Constant(dim, -1.0), Vec::Constant(dim, 0.5)},
                          {0.5, Vec::Constant(dim, 1.0), Vec::Constant(dim, 0.5)}});
}

}  // namespace

std::unique_ptr<Model> make_model(const ModelConfig& cfg) {
  if (cfg.id == "linear_gaussian") return std::make_unique<LinearGaussian1D>(cfg.linear_gaussian);
  if (cfg.id == "source_location") return std::make_unique<SourceLocation>(cfg.source);
  if (cfg.id == "smooth_mask") return std::make_unique<SmoothMaskInverse>(cfg.mask, mask_prior(cfg));
  throw ConfigError("model.id: unknown model '" + cfg.id + "'");
}

std::shared_ptr<const ScoreOracle> make_oracle(const ModelConfig& cfg) {
  if (cfg.id == "linear_gaussian") {
    const auto& p = cfg.linear_gaussian;
    return std::make_shared<GaussianMixtureOracle>(GaussianMixtureOracle::gaussian(Vec::Constant(1, p.prior_mean), p.prior_sd));
  }
  if (cfg.id == "smooth_mask") return std::make_shared<GaussianMixtureOracle>(mask_prior(cfg));
  return nullptr;
}

LoopConfig loop_config(const RunConfig& cfg) {
  LoopConfig loop = cfg.loop;
  if (cfg.diffusion_enabled) loop.diffusion = DiffusionSampler{make_oracle(cfg.model), cfg.schedule, cfg.pass};
  return loop;
}

SequentialConfig sequential_config(const RunConfig& cfg, bool random_designs) {
  SequentialConfig s;
  s.experiments = cfg.experiments;
  s.loop = loop_config(cfg);
  s.adam = cfg.adam;
  s.bounds = cfg.bounds;
  s.posterior_steps = cfg.posterior_steps;
  s.posterior_step = cfg.posterior_step;
  s.metrics = cfg.metrics;
  s.random_designs = random_designs;
  return s;
}

Box design_bounds(const RunConfig& cfg, const Model& model) { return cfg.bounds.value_or(model.default_bounds()); }

Vec resolve_theta_star(const RunConfig& cfg, const Model& model) {
  constexpr std::uint64_t kThetaStarSalt = 0x1005;
  if (cfg.theta_star) return *cfg.theta_star;
  CounterRng rng = RngStreams(cfg.seed).derive(kThetaStarSalt).stream(Stream::prior_init, 0, 0);
  return model.sample_prior(rng);
}

}  // namespace codiff
