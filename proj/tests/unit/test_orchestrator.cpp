#include "scenes.hpp"

#include "crowdlocal/edit.hpp"
#include "crowdlocal/errors.hpp"
#include "crowdlocal/orchestrator.hpp"
#include "crowdlocal/quality.hpp"

#include <doctest.h>

#include <random>

using namespace crowdlocal;

namespace {

EnhanceConfig small_config(std::uint64_t seed = 3) {
  EnhanceConfig cfg = EnhanceConfig::oracle_defaults();
  cfg.seed = seed;
  cfg.preview_max_edge = 24;
  return cfg;
}

/// Deterministic non-oracle response source.
Respond scripted(std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng](const SliderTask&) { return Response{std::uniform_real_distribution<double>(0, 1)(*rng), std::nullopt}; };
}

}  // namespace

TEST_SUITE("orchestrator") {
  TEST_CASE("oracle_adjust examples") {
    CHECK(std::abs(oracle_adjust([](double a) { return -(a - 0.3) * (a - 0.3); }).alpha - 0.3) <= 0.002);
    CHECK(std::abs(oracle_adjust([](double a) { return -(a - 0.71) * (a - 0.71); }).alpha - 0.71) <= 0.002);
    CHECK(oracle_adjust([](double a) { return a; }).alpha >= 0.999);
    CHECK(oracle_adjust([](double) { return 1.0; }).alpha == 0.0);
    const auto c = oracle_adjust([](double a) { return std::sin(3 * a); });
    CHECK(c.score == doctest::Approx(std::sin(3 * c.alpha)));
    // 17-point grid: the start is always among the evaluated points.
    double first = -1;
    oracle_adjust([&](double a) {
      if (first < 0) first = a;
      return 0.0;
    });
    CHECK(first == 0.0);
  }

  TEST_CASE("aggregate_responses") {
    CHECK(aggregate_responses({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7}) == 0.4);
    CHECK(aggregate_responses({0.9, 0.1, 0.5}) == 0.5);
    CHECK(aggregate_responses(std::vector<double>(7, 0.25)) == 0.25);
    CHECK(aggregate_responses({0.7, 0.3, 0.6, 0.1, 0.2, 0.5, 0.4}) == 0.4);
    CHECK_THROWS(aggregate_responses({}));
    CHECK_THROWS(aggregate_responses({0.1, 0.2}));
    CHECK_THROWS(aggregate_responses({0.1, 1.2, 0.3}));
  }

  TEST_CASE("validate_check") {
    CHECK(validate_check(0.5, 0.3, 0.7));
    CHECK_FALSE(validate_check(0.71, 0.3, 0.7));
    CHECK(validate_check(0.3, 0.3, 0.7));
    CHECK(validate_check(0.7, 0.3, 0.7));
    CHECK_FALSE(validate_check(0.29, 0.3, 0.7));
  }

  TEST_CASE("slider_param_map") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::MatrixXd w(30, 4);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng) * 0.8;
    std::vector<ParamVector> anchors;
    for (int j = 0; j < 4; ++j) anchors.emplace_back(u(rng), u(rng), u(rng));
    const ParamVector p(u(rng), u(rng), u(rng)), pb(u(rng), u(rng), u(rng));

    auto with_active = [&](const ParamVector& v) {
      Eigen::MatrixXd q(4, 3);
      for (int j = 0; j < 4; ++j) q.row(j) = anchors[std::size_t(j)].transpose();
      q.row(1) = v.transpose();
      return assemble_param_map(w, q);
    };
    CHECK(slider_param_map(w, anchors, 2, p, pb, 0.0) == with_active(p));
    for (double a : {0.0, 0.37, 1.0}) {
      const ParamVector eff = (1 - a) * p + a * pb;
      CHECK((slider_param_map(w, anchors, 2, p, pb, a) - with_active(eff)).cwiseAbs().maxCoeff() < 1e-12);
    }
    const std::vector<ParamVector> zeros(4, ParamVector::Zero());
    CHECK(slider_param_map(w, zeros, 1, ParamVector::Zero(), pb, 0.0).isZero());
    CHECK_THROWS(slider_param_map(w, anchors, 0, p, pb, 0.5));
    CHECK_THROWS(slider_param_map(w, anchors, 5, p, pb, 0.5));
  }

  TEST_CASE("config validation and JSON") {
    EnhanceConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    auto bad = [](auto mutate) {
      EnhanceConfig c;
      mutate(c);
      return c;
    };
    CHECK_THROWS_AS(bad([](EnhanceConfig& c) { c.L = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](EnhanceConfig& c) { c.S = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](EnhanceConfig& c) { c.responses_per_slider = 6; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](EnhanceConfig& c) { c.check_lower = 0.8; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](EnhanceConfig& c) { c.global_filter = true; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](EnhanceConfig& c) { c.kernel.length_scale = 0; }).validate(), ConfigError);

    EnhanceConfig custom = EnhanceConfig::human_defaults();
    custom.L = 2;
    custom.strategy = Strategy::variance;
    custom.seed = 99;
    custom.check_lower = 0.1;
    const nlohmann::json j = custom;
    const auto back = j.get<EnhanceConfig>();
    CHECK(nlohmann::json(back) == j);
    CHECK(back.preprocess);
    CHECK(back.L == 2);

    CHECK(nlohmann::json::parse(R"({"S": 3})").get<EnhanceConfig>().L == 4);
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"Lx": 3})").get<EnhanceConfig>(), ConfigError);
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"L": "four"})").get<EnhanceConfig>(), ConfigError);
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"strategy": "kmeans"})").get<EnhanceConfig>(), ConfigError);
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"check_range": [0.5]})").get<EnhanceConfig>(), ConfigError);
  }

  TEST_CASE("preparation") {
    const Image img = testsupport::make_scene(1, 40, 30);
    const Prepared p = prepare(img, small_config());
    CHECK(p.keys.size() == 4);
    CHECK(p.weights.rows() == 1200);
    CHECK(p.weights.cols() == 4);
    CHECK(std::max(p.preview.width, p.preview.height) <= 24);
    CHECK(p.preview_weights.rows() == p.preview.pixel_count());
    CHECK(p.keys == prepare(img, small_config()).keys);

    EnhanceConfig global = small_config();
    global.L = 1;
    global.global_filter = true;
    const Prepared g = prepare(img, global);
    CHECK((g.weights.array() == 1.0).all());

    EnhanceConfig too_many = small_config();
    too_many.L = 5;
    CHECK_THROWS_AS(prepare(testsupport::make_scene(1, 2, 2), too_many), ConfigError);

    EnhanceConfig human = EnhanceConfig::human_defaults();
    human.preview_max_edge = 24;
    const Image dark = apply_param_map(img, global_map(ParamVector(-0.8, 0, 0), img.pixel_count()));
    CHECK(prepare(dark, human).working.data.mean() > dark.data.mean());
  }

  TEST_CASE("oracle run: schedule, monotonicity, final render") {
    const Image ref = testsupport::make_scene(2, 40, 30);
    const Image input = testsupport::edit_left_half(ref, ParamVector(-0.8, 0, 0));
    const auto result = enhance(input, small_config(), oracle_respond([&](const Image& im) {
                                  return psnr(resize_for_preview(ref, 24), im);
                                }));
    REQUIRE(result.trace.size() == 16);
    for (int i = 0; i < 16; ++i) {
      CHECK(result.trace[std::size_t(i)].s == i / 4 + 1);
      CHECK(result.trace[std::size_t(i)].l == i % 4 + 1);
      CHECK(result.trace[std::size_t(i)].score.has_value());
    }
    for (std::size_t i = 5; i < 16; ++i) CHECK(*result.trace[i].score >= *result.trace[i - 1].score - 1e-9);
    CHECK(result.params.rows() == input.pixel_count());
    CHECK(result.image == apply_param_map(input, result.params));
    CHECK(psnr(ref, result.image) > psnr(ref, input));

    const std::string csv = trace_csv(result.trace);
    CHECK(csv.rfind("step,s,l,alpha,score\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 17);
  }

  TEST_CASE("zero responses keep the first anchors") {
    const Image img = testsupport::make_scene(3, 30, 20);
    const EnhanceConfig cfg = small_config(8);
    EnhancementRun run(img, cfg);
    std::vector<Eigen::VectorXd> first;
    for (const auto& st : run.states()) first.push_back(st.history[0]);
    const auto result = finish(run, [](const SliderTask&) { return Response{0.0, std::nullopt}; });
    Eigen::MatrixXd q(4, 3);
    for (int l = 0; l < 4; ++l) q.row(l) = first[std::size_t(l)].transpose();
    CHECK(result.params == assemble_param_map(result.prepared.weights, q));
    CHECK(result.image == apply_param_map(img, result.params));
  }

  TEST_CASE("stepwise run bookkeeping") {
    EnhancementRun run(testsupport::make_scene(0, 30, 20), small_config());
    CHECK(run.current_step() == std::pair{1, 1});
    CHECK(run.anchors() == std::vector<ParamVector>(4, ParamVector::Zero()));
    const SliderTask t = run.current_task();
    CHECK(t.param_map(0.3).rows() == run.prepared().preview.pixel_count());
    CHECK(t.param_map(0.3, false).rows() == 600);
    run.submit(0.5);
    run.submit(0.5);
    CHECK(run.current_step() == std::pair{1, 3});
    CHECK(run.anchors()[0] != ParamVector::Zero());
    CHECK(run.anchors()[2] == ParamVector::Zero());
    for (int i = 0; i < 3; ++i) run.submit(0.2);
    CHECK(run.current_step() == std::pair{2, 2});
    // At s >= 2, alpha = 0 reproduces the current state.
    const SliderTask t2 = run.current_task();
    CHECK(t2.param_map(0.0, false) == run.final_param_map(false));
    while (!run.done()) run.submit(0.6);
    CHECK_THROWS(run.current_step());
    CHECK(run.trace().size() == 16);
  }

  TEST_CASE("save and restore mid-run are bit-identical") {
    const Image img = testsupport::make_scene(4, 36, 28);
    const EnhanceConfig cfg = small_config(21);
    const auto straight = enhance(img, cfg, scripted(5));

    EnhancementRun first(img, cfg);
    const Respond respond = scripted(5);
    for (int i = 0; i < 7; ++i) first.submit(respond(first.current_task()).alpha);
    const std::string saved = first.save().dump();
    auto resumed = EnhancementRun::restore(img, nlohmann::json::parse(saved));
    CHECK(resumed.steps_done() == 7);
    CHECK(resumed.states() == first.states());
    const auto rest = finish(resumed, respond);
    CHECK(rest.image == straight.image);
    CHECK(rest.params == straight.params);
    REQUIRE(rest.trace.size() == straight.trace.size());
    for (std::size_t i = 0; i < rest.trace.size(); ++i) CHECK(rest.trace[i].alpha == straight.trace[i].alpha);

    auto doc = nlohmann::json::parse(saved);
    doc["keys"][0] = 99999;
    CHECK_THROWS(EnhancementRun::restore(img, doc));
  }

  TEST_CASE("a failing response source aborts with resumable state") {
    const Image img = testsupport::make_scene(5, 30, 24);
    const EnhanceConfig cfg = small_config(2);
    const auto straight = enhance(img, cfg, scripted(9));

    const Respond good = scripted(9);
    int calls = 0;
    const Respond flaky = [&](const SliderTask& t) {
      if (++calls == 10) throw std::runtime_error("worker pool empty");
      return good(t);
    };
    std::string state;
    try {
      enhance(img, cfg, flaky);
      FAIL("expected abort");
    } catch (const EnhanceAborted& e) {
      state = e.state_json();
      CHECK(std::string(e.what()).find("worker pool empty") != std::string::npos);
    }
    auto run = EnhancementRun::restore(img, nlohmann::json::parse(state));
    CHECK(run.steps_done() == 9);
    const auto result = finish(run, good);
    CHECK(result.image == straight.image);
  }

  TEST_CASE("line-search state JSON round trip") {
    auto st = record_choice(start_line_search(77), 0.123456789012345);
    st = with_endpoint(st, next_endpoint(st));
    const nlohmann::json j = st;
    CHECK(nlohmann::json::parse(j.dump()).get<LineSearchState>() == st);
  }
}
