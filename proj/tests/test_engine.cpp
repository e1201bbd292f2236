#include <doctest.h>

#include <sstream>
#include <tuple>

#include "moesim/engine.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace moesim;
using moesim::testing::make_trace;

namespace {

GeneratorConfig gen(std::size_t prompts, std::uint64_t seed) {
    GeneratorConfig c;
    c.num_prompts = prompts;
    c.tokens_per_prompt = 32;
    c.shape = {4, 16, 3};
    c.hot_set_size = 5;
    c.skew = 0.8;
    c.seed = seed;
    return c;
}

PredictorState state_for(const ModelShape& shape) {
    PredictorState s;
    s.shape = shape;
    return s;
}

}  // namespace

TEST_CASE("two-token hand trace under lru_only") {
    const ModelShape shape{1, 4, 2};
    const auto trace = make_trace(0, {{{0, 1}}, {{0, 2}}});
    ReplayConfig cfg{shape, 1, CacheConfig::entries(2), false};
    const auto p = make_predictor(PredictorKind::lru_only, state_for(shape));
    const auto r = replay_prompt(trace, *p, cfg).report;
    CHECK(r.total.measured_accesses == 2);
    CHECK(r.total.cache_hits == 1);
    CHECK(r.total.prediction_hits == 0);
    CHECK(r.total.prediction_opportunities == 2);
}

TEST_CASE("oracle reaches 1.0 on both rates") {
    const auto cfg = gen(8, 1);
    const auto traces = generate_synthetic(cfg);
    auto s = state_for(cfg.shape);
    s.ground_truth = traces;
    const auto p = make_predictor(PredictorKind::oracle, s);
    for (std::size_t entries : {3u, 4u, 10u, 64u}) {
        ReplayConfig rc{cfg.shape, 8, CacheConfig::entries(entries, 3), false};
        const auto run = replay_all(traces, *p, rc);
        CHECK(run.aggregate.cache_hit_rate() == 1.0);
        CHECK(run.aggregate.prediction_hit_rate() == 1.0);
    }
    const auto sw = sweep(traces, *p, {0.05, 0.1, 0.5, 1.0}, ReplayConfig{cfg.shape, 8, CacheConfig::fraction(1.0, 3)});
    for (const auto& pt : sw.points) CHECK(pt.report.cache_hit_rate() == 1.0);
}

TEST_CASE("full-capacity lru_only misses only compulsorily") {
    const auto cfg = gen(10, 2);
    const auto traces = generate_synthetic(cfg);
    const auto p = make_predictor(PredictorKind::lru_only, state_for(cfg.shape));
    const auto run = replay_all(traces, *p, ReplayConfig{cfg.shape, 0, CacheConfig::fraction(1.0)});
    CHECK(*run.aggregate.cache_hit_rate() == doctest::Approx(oracle::compulsory_hit_rate(traces)).epsilon(1e-15));
    const auto sw = sweep(traces, *p, {1.0}, ReplayConfig{cfg.shape, 0, CacheConfig::fraction(0.5)});
    CHECK(*sw.points[0].report.cache_hit_rate() == doctest::Approx(oracle::compulsory_hit_rate(traces)).epsilon(1e-15));
}

TEST_CASE("lru_only sweep is non-decreasing") {
    const auto cfg = gen(10, 3);
    const auto traces = generate_synthetic(cfg);
    const auto p = make_predictor(PredictorKind::lru_only, state_for(cfg.shape));
    const auto sw = sweep(traces, *p, {0.02, 0.1, 0.25, 0.5, 1.0}, ReplayConfig{cfg.shape});
    for (std::size_t i = 1; i < sw.points.size(); ++i)
        CHECK(*sw.points[i].report.cache_hit_rate() >= *sw.points[i - 1].report.cache_hit_rate());
}

TEST_CASE("results do not depend on the number of jobs") {
    const auto cfg = gen(12, 4);
    const auto traces = generate_synthetic(cfg);
    auto s = state_for(cfg.shape);
    s.training_traces = traces;
    std::vector<Eam> reams;
    for (const auto& t : traces) reams.push_back(prompt_eam(t, cfg.shape));
    EamcConfig ec;
    ec.capacity = 4;
    s.eamc = build_eamc(reams, ec);
    for (auto kind : {PredictorKind::global_frequency, PredictorKind::eam_cosine}) {
        const auto p = make_predictor(kind, s);
        ReplayConfig rc{cfg.shape, 4, CacheConfig::fraction(0.1), true};
        const auto a = replay_all(traces, *p, rc, 1);
        const auto b = replay_all(traces, *p, rc, 8);
        CHECK(a.aggregate == b.aggregate);
        REQUIRE(a.prompts.size() == b.prompts.size());
        for (std::size_t i = 0; i < a.prompts.size(); ++i) {
            CHECK(a.prompts[i].prompt_id == b.prompts[i].prompt_id);
            CHECK(a.prompts[i].report == b.prompts[i].report);
        }
        std::ostringstream x, y;
        write_run_csv(x, a);
        write_run_csv(y, b);
        CHECK(x.str() == y.str());
    }
}

TEST_CASE("no predictor beats the oracle") {
    const auto cfg = gen(10, 5);
    const auto traces = generate_synthetic(cfg);
    auto s = state_for(cfg.shape);
    s.ground_truth = traces;
    s.training_traces = traces;
    std::vector<Eam> reams;
    for (const auto& t : traces) reams.push_back(prompt_eam(t, cfg.shape));
    s.eamc = build_eamc(reams, {});
    for (double f : {0.05, 0.1, 0.3}) {
        const ReplayConfig rc{cfg.shape, 8, CacheConfig::fraction(f, 3)};
        const double oracle = *replay_all(traces, *make_predictor(PredictorKind::oracle, s), rc).aggregate.cache_hit_rate();
        for (auto kind : {PredictorKind::lru_only, PredictorKind::global_frequency, PredictorKind::eam_cosine,
                          PredictorKind::next_layer_all})
            CHECK(*replay_all(traces, *make_predictor(kind, s), rc).aggregate.cache_hit_rate() <= oracle);
    }
}

TEST_CASE("self-sketch dominance") {
    const auto cfg = gen(6, 6);
    const auto traces = generate_synthetic(cfg);
    const ReplayConfig rc{cfg.shape, 4, CacheConfig::fraction(0.25, static_cast<std::size_t>(cfg.shape.num_experts))};
    for (const auto& trace : traces) {
        auto self = state_for(cfg.shape);
        EamcConfig ec;
        ec.mode = EamcMode::recent;
        self.eamc = build_eamc({prompt_eam(trace, cfg.shape)}, ec);
        const double own =
            *replay_prompt(trace, *make_predictor(PredictorKind::eam_cosine, self), rc).report.prediction_hit_rate();
        CHECK(own == 1.0);
        for (const auto& other : traces) {
            auto st = state_for(cfg.shape);
            st.eamc = build_eamc({prompt_eam(other, cfg.shape)}, ec);
            CHECK(*replay_prompt(trace, *make_predictor(PredictorKind::eam_cosine, st), rc).report.prediction_hit_rate() <=
                  own);
        }
    }
}

TEST_CASE("warm-up covering the whole prompt gives n/a rates") {
    const ModelShape shape{1, 4, 2};
    const auto trace = make_trace(3, {{{0, 1}}, {{0, 2}}});
    const auto p = make_predictor(PredictorKind::lru_only, state_for(shape));
    RunResult run = replay_all({trace}, *p, ReplayConfig{shape, 5, CacheConfig::entries(2)});
    CHECK(!run.aggregate.cache_hit_rate().has_value());
    std::ostringstream out;
    write_run_csv(out, run);
    CHECK(out.str() ==
          "prompt_id,measured_accesses,cache_hits,cache_hit_rate,prediction_opportunities,prediction_hits,"
          "prediction_hit_rate,steps,exact_set_matches,uncovered_steps\n"
          "3,0,0,n/a,0,0,n/a,0,0,0\n"
          "all,0,0,n/a,0,0,n/a,0,0,0\n");
}

TEST_CASE("sweep CSV layout") {
    const ModelShape shape{1, 4, 2};
    const auto trace = make_trace(0, {{{0, 1}}, {{0, 2}}, {{0, 1}}});
    const auto p = make_predictor(PredictorKind::lru_only, state_for(shape));
    const auto sw = sweep({trace}, *p, {0.5, 1.0}, ReplayConfig{shape, 1, CacheConfig::fraction(1.0)});
    std::ostringstream out;
    write_sweep_csv(out, sw);
    // 0.5 -> 2 entries: after warm-up [0,1]; token 1: 0 hit, 2 miss (evicts 1); token 2: 0 hit, 1 miss.
    // 1.0 -> 4 entries: token 1: 0 hit, 2 miss; token 2: 0 hit, 1 hit.
    CHECK(out.str() ==
          "capacity_fraction,predictor,cache_hit_rate,prediction_hit_rate,measured_accesses\n"
          "0.5,lru-only,0.5,0,4\n"
          "1,lru-only,0.75,0,4\n");
}

TEST_CASE("shape mismatch is rejected") {
    const ModelShape shape{2, 4, 2};
    const auto trace = make_trace(0, {{{0, 1}, {0, 1}}, {{0, 2}}});
    const auto p = make_predictor(PredictorKind::lru_only, state_for(shape));
    CHECK_THROWS_AS(replay_prompt(trace, *p, ReplayConfig{shape, 0, CacheConfig::entries(2)}), ConfigError);
}
