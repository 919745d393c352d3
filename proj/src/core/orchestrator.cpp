#include "crowdlocal/orchestrator.hpp"

#include "crowdlocal/csv.hpp"
#include "crowdlocal/edit.hpp"
#include "crowdlocal/errors.hpp"
#include "crowdlocal/illumination.hpp"
#include "crowdlocal/seeding.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

namespace crowdlocal {

using nlohmann::json;

namespace {

// Stream ids for derive_seed.
constexpr std::uint64_t kSelectionStream = 1;
constexpr std::uint64_t kLineSearchStream = 100;

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

ParamVector vector_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected an array of 3 numbers");
  return ParamVector(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::MatrixXd anchors_matrix(const std::vector<ParamVector>& anchors) {
  Eigen::MatrixXd q(Eigen::Index(anchors.size()), 3);
  for (std::size_t j = 0; j < anchors.size(); ++j) q.row(Eigen::Index(j)) = anchors[j].transpose();
  return q;
}

}  // namespace

void EnhanceConfig::validate() const {
  require(L >= 1, "L must be at least 1");
  require(S >= 1, "S must be at least 1");
  require(responses_per_slider >= 1 && responses_per_slider % 2 == 1, "responses_per_slider must be odd and positive");
  require(check_lower >= 0.0 && check_upper <= 1.0 && check_lower < check_upper,
          "check range must satisfy 0 <= lower < upper <= 1");
  kernel.validate();
  require(feature_scales.allFinite() && (feature_scales.array() > 0.0).all(), "feature scales must be positive");
  require(preprocess_gamma > 0.0 && preprocess_gamma <= 1.0, "preprocess gamma must be in (0,1]");
  require(denoise_strength >= 0 && denoise_strength <= 3, "denoise strength must be in 0..3");
  require(preview_max_edge >= 1, "preview_max_edge must be positive");
  require(!global_filter || L == 1, "the global filter needs L = 1");
}

void to_json(json& j, const EnhanceConfig& c) {
  j = json{{"L", c.L},
           {"S", c.S},
           {"strategy", to_string(c.strategy)},
           {"length_scale", c.kernel.length_scale},
           {"regularizer", c.kernel.regularizer},
           {"feature_scales", vector_to_json(c.feature_scales)},
           {"use_illumination", c.use_illumination},
           {"global_filter", c.global_filter},
           {"preprocess", c.preprocess},
           {"preprocess_gamma", c.preprocess_gamma},
           {"denoise_strength", c.denoise_strength},
           {"seed", c.seed},
           {"responses_per_slider", c.responses_per_slider},
           {"check_range", {c.check_lower, c.check_upper}},
           {"preview_max_edge", c.preview_max_edge}};
}

void from_json(const json& j, EnhanceConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "L", "S", "strategy", "length_scale", "regularizer", "feature_scales", "use_illumination", "global_filter",
      "preprocess", "preprocess_gamma", "denoise_strength", "seed", "responses_per_slider", "check_range",
      "preview_max_edge"};
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) throw ConfigError("unknown config field: " + item.key());
  }
  try {
    if (j.contains("L")) c.L = j.at("L").get<int>();
    if (j.contains("S")) c.S = j.at("S").get<int>();
    if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
    if (j.contains("length_scale")) c.kernel.length_scale = j.at("length_scale").get<double>();
    if (j.contains("regularizer")) c.kernel.regularizer = j.at("regularizer").get<double>();
    if (j.contains("feature_scales")) c.feature_scales = vector_from_json(j.at("feature_scales"));
    if (j.contains("use_illumination")) c.use_illumination = j.at("use_illumination").get<bool>();
    if (j.contains("global_filter")) c.global_filter = j.at("global_filter").get<bool>();
    if (j.contains("preprocess")) c.preprocess = j.at("preprocess").get<bool>();
    if (j.contains("preprocess_gamma")) c.preprocess_gamma = j.at("preprocess_gamma").get<double>();
    if (j.contains("denoise_strength")) c.denoise_strength = j.at("denoise_strength").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("responses_per_slider")) c.responses_per_slider = j.at("responses_per_slider").get<int>();
    if (j.contains("check_range")) {
      const auto& r = j.at("check_range");
      if (!r.is_array() || r.size() != 2) throw ConfigError("check_range must be [lower, upper]");
      c.check_lower = r[0].get<double>();
      c.check_upper = r[1].get<double>();
    }
    if (j.contains("preview_max_edge")) c.preview_max_edge = j.at("preview_max_edge").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.validate();
}

Prepared prepare(const Image& image, const EnhanceConfig& cfg) {
  validate(image);
  cfg.validate();
  if (cfg.L > image.pixel_count()) throw ConfigError("L exceeds the pixel count");
  Prepared out;
  out.working = image;
  if (cfg.preprocess) out.working = lime_preprocess(out.working, PreprocessParams{cfg.preprocess_gamma});
  if (cfg.denoise_strength > 0) out.working = denoise(out.working, cfg.denoise_strength);
  out.illumination = estimate_illumination(out.working);

  auto features_for = [&](const Image& img, const IlluminationMap& t) {
    return cfg.use_illumination ? pixel_features(img, t, cfg.feature_scales)
                                : spatial_features(img.width, img.height, cfg.feature_scales.head<2>());
  };
  out.features = features_for(out.working, out.illumination);
  const SelectionStrategy selection{cfg.strategy, derive_seed(cfg.seed, kSelectionStream)};
  out.keys = select_key_pixels(out.features, std::size_t(cfg.L), selection, cfg.kernel);

  out.preview = resize_for_preview(out.working, cfg.preview_max_edge);
  const bool same_size = out.preview.width == out.working.width && out.preview.height == out.working.height;
  if (cfg.global_filter) {
    out.weights = Eigen::MatrixXd::Ones(out.working.pixel_count(), 1);
    out.preview_weights = Eigen::MatrixXd::Ones(out.preview.pixel_count(), 1);
    return out;
  }
  out.weights = weight_maps(out.features, out.keys, cfg.kernel);
  if (same_size) {
    out.preview_weights = out.weights;
  } else {
    const auto t_small = resize_illumination(out.illumination, out.preview.width, out.preview.height);
    const auto small = features_for(out.preview, t_small);
    out.preview_weights = weights_at(small.scaled(), gather_rows(out.features.scaled(), out.keys), cfg.kernel);
  }
  return out;
}

ParamMap slider_param_map(const Eigen::MatrixXd& weights, const std::vector<ParamVector>& anchors, int l,
                          const ParamVector& p, const ParamVector& p_bar, double alpha) {
  if (l < 1 || l > int(anchors.size())) throw std::out_of_range("slider_param_map: key index out of range");
  Eigen::MatrixXd q = anchors_matrix(anchors);
  q.row(l - 1) = blend(p, p_bar, alpha).transpose();
  return assemble_param_map(weights, q);
}

OracleChoice oracle_adjust(const std::function<double(double)>& quality_of_alpha) {
  OracleChoice best{0.0, -std::numeric_limits<double>::infinity()};
  bool any = false;
  auto eval = [&](double a) {
    const double q = quality_of_alpha(a);
    if (!any || q > best.score || (q == best.score && a < best.alpha)) best = {a, q};
    any = true;
    return q;
  };

  constexpr int grid = 16;
  int best_k = 0;
  double best_grid = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= grid; ++k) {
    const double q = eval(double(k) / grid);
    if (q > best_grid) {
      best_grid = q;
      best_k = k;
    }
  }

  double lo = double(std::max(best_k - 1, 0)) / grid;
  double hi = double(std::min(best_k + 1, grid)) / grid;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = eval(c), fd = eval(d);
  while (hi - lo > 1e-3) {
    if (fc >= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = eval(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = eval(d);
    }
  }
  return best;
}

double aggregate_responses(std::vector<double> alphas) {
  if (alphas.empty()) throw std::invalid_argument("aggregate_responses: no responses");
  if (alphas.size() % 2 == 0) throw std::invalid_argument("aggregate_responses: even response count");
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("aggregate_responses: alpha outside [0,1]");
  }
  const auto mid = alphas.begin() + std::ptrdiff_t(alphas.size() / 2);
  std::nth_element(alphas.begin(), mid, alphas.end());
  return *mid;
}

bool validate_check(double alpha_check, double lower, double upper) {
  return alpha_check >= lower && alpha_check <= upper;
}

std::string trace_csv(const Trace& trace) {
  std::ostringstream out;
  out << "step,s,l,alpha,score\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& r = trace[i];
    out << (i + 1) << ',' << r.s << ',' << r.l << ',' << format_double(r.alpha) << ',';
    if (r.score) out << format_double(*r.score);
    out << '\n';
  }
  return out.str();
}

ParamMap SliderTask::param_map(double alpha, bool preview) const {
  if (!prepared) throw std::logic_error("slider task without preparation");
  return slider_param_map(preview ? prepared->preview_weights : prepared->weights, anchors, l, p, p_bar, alpha);
}

Image SliderTask::render(double alpha, bool preview) const {
  return apply_param_map(preview ? prepared->preview : prepared->working, param_map(alpha, preview));
}

Respond oracle_respond(std::function<double(const Image&)> quality) {
  return [quality = std::move(quality)](const SliderTask& task) {
    const auto choice = oracle_adjust([&](double a) { return quality(task.render(a, true)); });
    return Response{choice.alpha, choice.score};
  };
}

EnhancementRun::EnhancementRun(Image input, EnhanceConfig cfg) : input_(std::move(input)), cfg_(cfg) {
  prepared_ = prepare(input_, cfg_);
  for (int l = 0; l < cfg_.L; ++l) {
    states_.push_back(start_line_search(derive_seed(cfg_.seed, kLineSearchStream + std::uint64_t(l)),
                                        kNumEditParams, cfg_.line_search));
  }
}

std::pair<int, int> EnhancementRun::current_step() const {
  if (done()) throw std::logic_error("enhancement run is complete");
  return {steps_done() / cfg_.L + 1, steps_done() % cfg_.L + 1};
}

std::vector<ParamVector> EnhancementRun::anchors() const {
  std::vector<ParamVector> out;
  for (const auto& st : states_) out.push_back(st.completed() > 0 ? ParamVector(st.anchor()) : ParamVector::Zero());
  return out;
}

SliderTask EnhancementRun::current_task() const {
  const auto [s, l] = current_step();
  const auto [p, p_bar] = states_[std::size_t(l - 1)].open_segment();
  return SliderTask{s, l, anchors(), p, p_bar, &prepared_};
}

void EnhancementRun::submit(double alpha, std::optional<double> score, double wall_seconds) {
  const auto [s, l] = current_step();
  auto& st = states_[std::size_t(l - 1)];
  LineSearchState next = record_choice(st, alpha);
  if (s < cfg_.S) next = with_endpoint(next, next_endpoint(next, cfg_.line_search));
  st = std::move(next);
  trace_.push_back({s, l, alpha, score, wall_seconds});
}

ParamMap EnhancementRun::final_param_map(bool preview) const {
  return assemble_param_map(preview ? prepared_.preview_weights : prepared_.weights, anchors_matrix(anchors()));
}

Image EnhancementRun::final_image() const { return apply_param_map(prepared_.working, final_param_map(false)); }

json EnhancementRun::save() const {
  json states = json::array();
  for (const auto& st : states_) states.push_back(st);
  json trace = json::array();
  for (const auto& r : trace_) {
    trace.push_back({{"s", r.s},
                     {"l", r.l},
                     {"alpha", r.alpha},
                     {"score", r.score ? json(*r.score) : json(nullptr)},
                     {"wall_seconds", r.wall_seconds}});
  }
  json keys = json::array();
  for (auto k : prepared_.keys.indices) keys.push_back(k);
  return json{{"config", cfg_}, {"keys", keys}, {"states", states}, {"trace", trace}};
}

EnhancementRun EnhancementRun::restore(Image input, const json& doc) {
  EnhancementRun run(std::move(input), doc.at("config").get<EnhanceConfig>());
  std::vector<Eigen::Index> keys;
  for (const auto& k : doc.at("keys")) keys.push_back(k.get<Eigen::Index>());
  if (keys != run.prepared_.keys.indices) throw std::runtime_error("restore: key pixels differ from the saved run");
  const auto& states = doc.at("states");
  if (states.size() != run.states_.size()) throw std::runtime_error("restore: wrong number of line-search states");
  for (std::size_t l = 0; l < states.size(); ++l) run.states_[l] = states[l].get<LineSearchState>();
  for (const auto& r : doc.at("trace")) {
    TraceRecord rec{r.at("s").get<int>(), r.at("l").get<int>(), r.at("alpha").get<double>(), std::nullopt,
                    r.at("wall_seconds").get<double>()};
    if (!r.at("score").is_null()) rec.score = r.at("score").get<double>();
    run.trace_.push_back(rec);
  }
  if (run.steps_done() > run.total_steps()) throw std::runtime_error("restore: trace longer than the schedule");
  return run;
}

EnhanceResult finish(EnhancementRun& run, const Respond& respond) {
  while (!run.done()) {
    const SliderTask task = run.current_task();
    const auto t0 = std::chrono::steady_clock::now();
    Response r;
    try {
      r = respond(task);
    } catch (const std::exception& e) {
      throw EnhanceAborted(std::string("response source failed: ") + e.what(), run.save().dump());
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    run.submit(r.alpha, r.score, wall);
  }
  ParamMap params = run.final_param_map(false);
  Image image = apply_param_map(run.prepared().working, params);
  return EnhanceResult{std::move(image), std::move(params), run.trace(), run.prepared()};
}

EnhanceResult enhance(const Image& image, const EnhanceConfig& cfg, const Respond& respond) {
  EnhancementRun run(image, cfg);
  return finish(run, respond);
}

void to_json(json& j, const LineSearchState& s) {
  json history = json::array();
  for (const auto& v : s.history) history.push_back(vector_to_json(v));
  json obs = json::array();
  for (const auto& o : s.observations) obs.push_back({o.segment, o.alpha});
  j = json{{"rng_seed", s.rng_seed}, {"history", history}, {"observations", obs}};
}

void from_json(const json& j, LineSearchState& s) {
  s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  s.history.clear();
  for (const auto& v : j.at("history")) {
    Eigen::VectorXd x(Eigen::Index(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) x[Eigen::Index(i)] = v[i].get<double>();
    s.history.push_back(std::move(x));
  }
  s.observations.clear();
  for (const auto& o : j.at("observations")) {
    s.observations.push_back({o.at(0).get<std::size_t>(), o.at(1).get<double>()});
  }
}

}  // namespace crowdlocal
