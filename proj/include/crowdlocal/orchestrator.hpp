#pragma once

// The enhancement loop: preparation (preprocess, illumination, features,
// key pixels, weight maps), then S rounds of one slider per key pixel.

#include "crowdlocal/active_select.hpp"
#include "crowdlocal/gpr.hpp"
#include "crowdlocal/image.hpp"
#include "crowdlocal/line_search.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace crowdlocal {

struct EnhanceConfig {
  int L = 4;
  int S = 4;
  Strategy strategy = Strategy::emoc;
  KernelConfig<double> kernel{};
  Eigen::Vector3d feature_scales{1.0, 1.0, 1.0};
  /// false: features are (x, y) only.
  bool use_illumination = true;
  /// One ParamVector for every pixel (W is a column of ones); requires L = 1.
  bool global_filter = false;
  bool preprocess = false;
  double preprocess_gamma = 0.8;
  int denoise_strength = 0;
  /// Drives random selection, line-search initialization and proposals.
  std::uint64_t seed = 0;
  int responses_per_slider = 7;
  double check_lower = 0.25;
  double check_upper = 0.75;
  /// Longest edge of the image the oracle scores and the service previews.
  int preview_max_edge = 512;
  LineSearchParams line_search{};

  /// Throws ConfigError.
  void validate() const;

  /// Automated-oracle experiments run on raw inputs.
  static EnhanceConfig oracle_defaults() { return {}; }
  /// Human sessions preprocess by default.
  static EnhanceConfig human_defaults() {
    EnhanceConfig c;
    c.preprocess = true;
    c.denoise_strength = 1;
    return c;
  }
};

void to_json(nlohmann::json& j, const EnhanceConfig& c);
/// Missing fields keep their defaults; unknown values throw ConfigError.
void from_json(const nlohmann::json& j, EnhanceConfig& c);

struct Prepared {
  Image working;  // input after optional preprocessing
  IlluminationMap illumination;
  PixelFeatures<double> features;
  KeyPixels keys;
  Eigen::MatrixXd weights;  // N x L
  Image preview;
  Eigen::MatrixXd preview_weights;
};

Prepared prepare(const Image& image, const EnhanceConfig& cfg);

/// P = sum_{j != l} w_j anchor_j^T + w_l blend(p, p_bar, alpha)^T, clamped.
ParamMap slider_param_map(const Eigen::MatrixXd& weights, const std::vector<ParamVector>& anchors, int l,
                          const ParamVector& p, const ParamVector& p_bar, double alpha);

struct OracleChoice {
  double alpha = 0;
  double score = 0;
};

/// 17-point grid on [0,1], then golden-section refinement of the best
/// bracket down to width 1e-3. Returns the best evaluated point, smaller alpha on ties.
OracleChoice oracle_adjust(const std::function<double(double)>& quality_of_alpha);

/// Exact median of an odd, non-empty list of alphas in [0,1].
double aggregate_responses(std::vector<double> alphas);

/// Closed interval check.
bool validate_check(double alpha_check, double lower, double upper);

struct TraceRecord {
  int s = 0;  // 1-based
  int l = 0;  // 1-based
  double alpha = 0;
  std::optional<double> score;
  double wall_seconds = 0;
  bool operator==(const TraceRecord&) const = default;
};
using Trace = std::vector<TraceRecord>;

/// step,s,l,alpha,score (score blank when absent).
std::string trace_csv(const Trace& trace);

struct SliderTask {
  int s = 0;
  int l = 0;
  std::vector<ParamVector> anchors;  // current per-key-pixel values, zero if untouched
  ParamVector p;
  ParamVector p_bar;
  const Prepared* prepared = nullptr;

  ParamMap param_map(double alpha, bool preview = true) const;
  Image render(double alpha, bool preview = true) const;
};

struct Response {
  double alpha = 0;
  std::optional<double> score;
};
using Respond = std::function<Response(const SliderTask&)>;

/// Oracle respond: oracle_adjust over preview renders scored by `quality`.
Respond oracle_respond(std::function<double(const Image&)> quality);

/// Stepwise driver shared by the batch loop and the session service.
class EnhancementRun {
 public:
  EnhancementRun(Image input, EnhanceConfig cfg);

  const EnhanceConfig& config() const { return cfg_; }
  const Image& input() const { return input_; }
  const Prepared& prepared() const { return prepared_; }
  const std::vector<LineSearchState>& states() const { return states_; }
  const Trace& trace() const { return trace_; }

  int total_steps() const { return cfg_.L * cfg_.S; }
  int steps_done() const { return int(trace_.size()); }
  bool done() const { return steps_done() == total_steps(); }
  /// 1-based (s, l) of the open step.
  std::pair<int, int> current_step() const;

  std::vector<ParamVector> anchors() const;
  SliderTask current_task() const;
  /// Closes the open step and proposes the next segment.
  void submit(double alpha, std::optional<double> score = std::nullopt, double wall_seconds = 0);

  /// P = W Q with Q the latest anchors.
  ParamMap final_param_map(bool preview = false) const;
  Image final_image() const;

  /// Config, line-search states and trace; the image is stored separately.
  nlohmann::json save() const;
  /// Recomputes preparation from `input` and replays nothing: states come from the document.
  static EnhancementRun restore(Image input, const nlohmann::json& doc);

 private:
  Image input_;
  EnhanceConfig cfg_;
  Prepared prepared_;
  std::vector<LineSearchState> states_;
  Trace trace_;
};

/// Raised when a respond call fails; carries a resumable save() document.
class EnhanceAborted : public std::runtime_error {
 public:
  EnhanceAborted(const std::string& what, std::string state_json)
      : std::runtime_error(what), state_json_(std::move(state_json)) {}
  const std::string& state_json() const { return state_json_; }

 private:
  std::string state_json_;
};

struct EnhanceResult {
  Image image;
  ParamMap params;
  Trace trace;
  Prepared prepared;
};

EnhanceResult enhance(const Image& image, const EnhanceConfig& cfg, const Respond& respond);
/// Continues a run, e.g. one restored from EnhanceAborted::state_json().
EnhanceResult finish(EnhancementRun& run, const Respond& respond);

void to_json(nlohmann::json& j, const LineSearchState& s);
void from_json(const nlohmann::json& j, LineSearchState& s);

}  // namespace crowdlocal
