#include "crowdlocal/csv.hpp"
#include "crowdlocal/edit.hpp"
#include "crowdlocal/errors.hpp"
#include "crowdlocal/http_server.hpp"
#include "crowdlocal/image.hpp"
#include "crowdlocal/orchestrator.hpp"
#include "crowdlocal/quality.hpp"
#include "crowdlocal/seeding.hpp"
#include "crowdlocal/session_service.hpp"
#include "crowdlocal/weight_export.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace crowdlocal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

constexpr std::uint64_t kScatterStream = 7;
constexpr std::size_t kScatterRows = 10000;

/// Usage, configuration and I/O failures share exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageIoError(ImageIoError::Kind::unwritable, "cannot write " + path.string());
  out << text;
  if (!out) throw ImageIoError(ImageIoError::Kind::unwritable, "short write to " + path.string());
}

struct Oracle {
  std::string name = "nr";
  std::optional<Image> reference;

  std::function<double(const Image&)> preview_quality(int max_edge) const {
    if (!reference) return [](const Image& im) { return nr_score(im); };
    auto small = std::make_shared<Image>(resize_for_preview(*reference, max_edge));
    return [small](const Image& im) { return psnr(*small, im); };
  }

  double full_quality(const Image& im) const { return reference ? psnr(*reference, im) : nr_score(im); }
};

Oracle parse_oracle(const std::string& spec) {
  Oracle o;
  if (spec == "nr") return o;
  if (spec.rfind("psnr:", 0) == 0 && spec.size() > 5) {
    o.name = "psnr";
    o.reference = load_image(spec.substr(5));
    return o;
  }
  throw UsageError("unknown oracle '" + spec + "' (expected nr or psnr:<reference>)");
}

/// t_255,p_brightness for at most kScatterRows pixels, chosen by a seeded sample.
std::string scatter_csv(const IlluminationMap& t, const ParamMap& params, std::uint64_t seed) {
  const auto n = std::size_t(params.rows());
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  if (n > kScatterRows) {
    std::mt19937_64 rng(derive_seed(seed, kScatterStream));
    std::vector<std::size_t> picked;
    std::sample(rows.begin(), rows.end(), std::back_inserter(picked), kScatterRows, rng);
    rows = std::move(picked);
  }
  std::string out = "t_255,p_brightness\n";
  for (auto r : rows) {
    out += format_double(255.0 * t.t[Eigen::Index(r)]) + ',' + format_double(params(Eigen::Index(r), 0)) + '\n';
  }
  return out;
}

struct EnhanceArgs {
  fs::path input;
  fs::path output;
  std::string oracle = "nr";
  int L = 4;
  int S = 4;
  std::string strategy = "emoc";
  std::uint64_t seed = 0;
  std::string trace;
  std::string dump_weights;
  std::string dump_scatter;
  bool no_illumination = false;
  bool global = false;
  bool preprocess = false;
  int denoise = 0;
  int preview_max_edge = 512;
  double length_scale = 0.5;
};

int cmd_enhance(const EnhanceArgs& a) {
  EnhanceConfig cfg = EnhanceConfig::oracle_defaults();
  cfg.L = a.L;
  cfg.S = a.S;
  cfg.strategy = parse_strategy(a.strategy);
  cfg.seed = a.seed;
  cfg.use_illumination = !a.no_illumination;
  cfg.global_filter = a.global;
  cfg.preprocess = a.preprocess;
  cfg.denoise_strength = a.denoise;
  cfg.preview_max_edge = a.preview_max_edge;
  cfg.kernel.length_scale = a.length_scale;
  cfg.validate();

  const Oracle oracle = parse_oracle(a.oracle);
  const Image input = load_image(a.input);
  if (oracle.reference && (oracle.reference->width != input.width || oracle.reference->height != input.height)) {
    throw UsageError("reference image size differs from the input");
  }
  const auto result = enhance(input, cfg, oracle_respond(oracle.preview_quality(cfg.preview_max_edge)));

  save_image(result.image, a.output);
  if (!a.trace.empty()) write_text(a.trace, trace_csv(result.trace));
  if (!a.dump_weights.empty()) {
    fs::create_directories(a.dump_weights);
    write_weight_pngs(result.prepared.weights, input.width, input.height, a.dump_weights);
    write_weight_binary(result.prepared.weights, fs::path(a.dump_weights) / "weights.bin");
  }
  if (!a.dump_scatter.empty()) write_text(a.dump_scatter, scatter_csv(result.prepared.illumination, result.params, a.seed));

  std::cout << "input " << oracle.name << ' ' << format_double(oracle.full_quality(input)) << '\n'
            << "output " << oracle.name << ' ' << format_double(oracle.full_quality(result.image)) << '\n';
  return kExitOk;
}

struct AblateArgs {
  fs::path inputs;
  std::string l_list = "1,2,4,6";
  std::string strategies = "emoc";
  bool no_illumination = false;
  int S = 8;
  int iterations = 0;
  std::uint64_t seed = 0;
  fs::path out;
  int preview_max_edge = 512;
};

std::vector<fs::path> image_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    if (entry.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw UsageError("no PNG or JPEG images in " + dir.string());
  return out;
}

int cmd_ablate(const AblateArgs& a) {
  std::vector<int> ls;
  for (const auto& item : split_list(a.l_list)) {
    int v = 0;
    const auto r = std::from_chars(item.data(), item.data() + item.size(), v);
    if (r.ec != std::errc() || r.ptr != item.data() + item.size() || v < 1) throw UsageError("bad L value '" + item + "'");
    ls.push_back(v);
  }
  std::vector<Strategy> strategies;
  for (const auto& name : split_list(a.strategies)) strategies.push_back(parse_strategy(name));
  if (ls.empty() || strategies.empty()) throw UsageError("empty --L-list or --strategies");
  if (a.S < 1) throw ConfigError("S must be at least 1");
  if (a.iterations < 0) throw ConfigError("iterations must be non-negative");
  std::vector<bool> illumination = {true};
  if (a.no_illumination) illumination.push_back(false);

  const auto files = image_files(a.inputs);
  std::string csv = "image,L,strategy,use_illumination,iteration,score\n";
  for (const auto& file : files) {
    const Image image = load_image(file);
    for (int L : ls) {
      for (Strategy strategy : strategies) {
        for (bool illum : illumination) {
          EnhanceConfig cfg = EnhanceConfig::oracle_defaults();
          cfg.L = L;
          // With a fixed iteration budget every L gets the same number of slider steps.
          cfg.S = a.iterations > 0 ? (a.iterations + L - 1) / L : a.S;
          cfg.strategy = strategy;
          cfg.use_illumination = illum;
          cfg.seed = a.seed;
          cfg.preview_max_edge = a.preview_max_edge;
          cfg.validate();
          const auto result = enhance(image, cfg, oracle_respond([](const Image& im) { return nr_score(im); }));
          const std::size_t steps = a.iterations > 0 ? std::size_t(a.iterations) : result.trace.size();
          for (std::size_t i = 0; i < steps; ++i) {
            csv += file.filename().string() + ',' + std::to_string(L) + ',' + to_string(strategy) + ',' +
                   (illum ? "true" : "false") + ',' + std::to_string(i + 1) + ',' +
                   format_double(*result.trace[i].score) + '\n';
          }
        }
      }
    }
  }
  write_text(a.out, csv);
  return kExitOk;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path data_dir = "data";
  std::string check_range = "0.25,0.75";
  int bundle_size = 5;
  std::uint64_t seed = 0;
  std::string static_dir;
};

httplib::Server* g_server = nullptr;

void handle_stop(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const ServeArgs& a) {
  ServiceConfig cfg;
  cfg.data_dir = a.data_dir;
  const auto range = split_list(a.check_range);
  if (range.size() != 2) throw UsageError("--check-range must be lower,upper");
  try {
    cfg.check_lower = std::stod(range[0]);
    cfg.check_upper = std::stod(range[1]);
  } catch (const std::exception&) {
    throw UsageError("--check-range must be two numbers");
  }
  cfg.bundle_size = a.bundle_size;
  cfg.seed = a.seed;
  SessionService service(cfg);

  httplib::Server server;
  std::optional<fs::path> static_dir;
  if (!a.static_dir.empty()) static_dir = a.static_dir;
  register_routes(server, service, static_dir);
  if (!server.bind_to_port(a.host, a.port)) throw std::runtime_error("cannot bind " + a.host + ":" + std::to_string(a.port));
  g_server = &server;
  std::signal(SIGINT, handle_stop);
  std::signal(SIGTERM, handle_stop);
  std::cout << "listening on http://" << a.host << ':' << a.port << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crowd-style local photo enhancement"};
  app.require_subcommand(1);

  EnhanceArgs ea;
  auto* enhance_cmd = app.add_subcommand("enhance", "Enhance one image with an automatic quality oracle");
  enhance_cmd->add_option("--input", ea.input, "Input PNG or JPEG")->required();
  enhance_cmd->add_option("--output", ea.output, "Output PNG")->required();
  enhance_cmd->add_option("--oracle", ea.oracle, "nr, or psnr:<reference image>");
  enhance_cmd->add_option("--L", ea.L, "Number of key pixels");
  enhance_cmd->add_option("--S", ea.S, "Sliders per key pixel");
  enhance_cmd->add_option("--strategy", ea.strategy, "emoc, variance, greedy_distance or random");
  enhance_cmd->add_option("--seed", ea.seed, "Random seed");
  enhance_cmd->add_option("--trace", ea.trace, "Trace CSV path");
  enhance_cmd->add_option("--dump-weights", ea.dump_weights, "Directory for weight-map PNGs");
  enhance_cmd->add_option("--dump-scatter", ea.dump_scatter, "Illumination vs brightness CSV path");
  enhance_cmd->add_flag("--no-illumination", ea.no_illumination, "Use (x, y) features only");
  enhance_cmd->add_flag("--global", ea.global, "One parameter vector for all pixels (needs --L 1)");
  enhance_cmd->add_flag("--preprocess", ea.preprocess, "Brighten with the illumination map first");
  enhance_cmd->add_option("--denoise", ea.denoise, "Denoise radius 0..3");
  enhance_cmd->add_option("--preview-max-edge", ea.preview_max_edge, "Longest edge the oracle scores");
  enhance_cmd->add_option("--length-scale", ea.length_scale, "Kernel length scale");

  AblateArgs aa;
  auto* ablate_cmd = app.add_subcommand("ablate", "Score-per-iteration sweeps over L, strategy and features");
  ablate_cmd->add_option("--inputs", aa.inputs, "Directory of input images")->required();
  ablate_cmd->add_option("--L-list", aa.l_list, "Comma-separated L values");
  ablate_cmd->add_option("--strategies", aa.strategies, "Comma-separated strategy names");
  ablate_cmd->add_flag("--no-illumination", aa.no_illumination, "Also run every configuration without illumination");
  ablate_cmd->add_option("--S", aa.S, "Sliders per key pixel");
  ablate_cmd->add_option("--iterations", aa.iterations, "Fixed slider budget per run (overrides --S)");
  ablate_cmd->add_option("--seed", aa.seed, "Random seed");
  ablate_cmd->add_option("--out", aa.out, "Results CSV")->required();
  ablate_cmd->add_option("--preview-max-edge", aa.preview_max_edge, "Longest edge the oracle scores");

  ServeArgs sa;
  auto* serve_cmd = app.add_subcommand("serve", "Run the session service");
  serve_cmd->add_option("--host", sa.host, "Bind address")->envname("CROWDLOCAL_HOST");
  serve_cmd->add_option("--port", sa.port, "Port")->envname("CROWDLOCAL_PORT");
  serve_cmd->add_option("--data-dir", sa.data_dir, "Persistence directory")->envname("CROWDLOCAL_DATA_DIR");
  serve_cmd->add_option("--check-range", sa.check_range, "Accepted check alphas, lower,upper")
      ->envname("CROWDLOCAL_CHECK_RANGE");
  serve_cmd->add_option("--bundle-size", sa.bundle_size, "Target slots per microtask")->envname("CROWDLOCAL_BUNDLE_SIZE");
  serve_cmd->add_option("--seed", sa.seed, "Seed for slot order and reversal")->envname("CROWDLOCAL_SEED");
  serve_cmd->add_option("--static", sa.static_dir, "Directory served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*enhance_cmd) return cmd_enhance(ea);
    if (*ablate_cmd) return cmd_ablate(aa);
    return cmd_serve(sa);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ImageIoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
