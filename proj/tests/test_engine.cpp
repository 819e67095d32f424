#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "bsauth/engine.hpp"
#include "bsauth/errors.hpp"
#include "bsauth/io.hpp"
#include "oracles.hpp"

using namespace bsauth;
using doctest::Approx;

namespace {

node::NodeConfig make_node(const std::string& id, const std::string& key_hex) {
    node::NodeConfig n;
    n.id = id;
    n.frame.key = codec::parse_hex(key_hex);
    n.frame.chip_rate_hz = 40e3;
    return n;
}

engine::ScenarioConfig reference_scenario(double sigma = 0.0) {
    engine::ScenarioConfig cfg;
    cfg.rf.noise_sigma_db = sigma;
    cfg.nodes.push_back(make_node("bfsn", "4d2f8a1c93e6b7051fd4c28e6a90b37e"));
    cfg.seed = 7;
    return cfg;
}

std::string dump(const engine::SimReport& r) { return io::to_json(r).dump(); }

void check_accounting(const engine::SimReport& r) {
    for (const auto& n : r.nodes) {
        CAPTURE(n.id);
        CHECK(n.accepts + n.total_rejects() == n.broadcasts);
        CHECK(n.frames_decoded + n.frames_corrupted + n.frames_missed == n.frames_emitted);
    }
}

double mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

}  // namespace

TEST_CASE("superpose_trace examples at sigma = 0") {
    rf::RfParams rf = rf::reference_defaults();
    rf.noise_sigma_db = 0.0;
    rng::Engine gen(1);

    SUBCASE("no reflectors gives the leakage level") {
        const auto t = engine::superpose_trace(rf, {}, 0.0, 1e-3, 1e6, 0, gen);
        REQUIRE(t.samples_dbm.size() == 1000);
        for (double x : t.samples_dbm) CHECK(x == Approx(rf.effective_leakage_dbm).epsilon(1e-12));
    }
    SUBCASE("pinned high vs pinned low differ by the dynamic range") {
        const auto n = make_node("a", "ff");
        engine::Reflector r = engine::reflector_for(rf, n, 0);
        const auto low = engine::superpose_trace(rf, std::vector{r}, 0.0, 1e-4, 1e6, 0, gen);
        r.low_dbm = r.high_dbm;  // pinned high
        const auto high = engine::superpose_trace(rf, std::vector{r}, 0.0, 1e-4, 1e6, 0, gen);
        for (std::size_t i = 0; i < low.samples_dbm.size(); ++i) {
            CHECK(high.samples_dbm[i] - low.samples_dbm[i] == Approx(rf::dynamic_range_db(rf)).epsilon(1e-9));
        }
    }
    SUBCASE("two pinned-high nodes add in linear power") {
        const auto n = make_node("a", "ff");
        engine::Reflector r = engine::reflector_for(rf, n, 0);
        r.low_dbm = r.high_dbm;
        const auto t = engine::superpose_trace(rf, std::vector{r, r}, 0.0, 1e-4, 1e6, 0, gen);
        const double expected = 10.0 * std::log10(mw(rf.effective_leakage_dbm) + 2.0 * mw(r.high_dbm));
        CHECK(t.samples_dbm.front() == Approx(expected).epsilon(1e-12));
    }
    SUBCASE("channel mismatch") {
        const engine::Reflector r = engine::reflector_for(rf, make_node("a", "ff"), 1);
        CHECK_THROWS_AS(engine::superpose_trace(rf, std::vector{r}, 0.0, 1e-4, 1e6, 0, gen), DomainError);
    }
}

TEST_CASE("superpose_trace sample grid") {
    rf::RfParams rf = rf::reference_defaults();
    rng::Engine gen(1);
    const auto t = engine::superpose_trace(rf, {}, 2.0, 2.0064, 1e6, 0, gen);
    CHECK(t.samples_dbm.size() == 6400);
    CHECK(t.start_time_s == 2.0);
    CHECK(t.time_of(10) == Approx(2.00001).epsilon(1e-12));
}

TEST_CASE("property: linear superposition at sigma = 0") {
    rf::RfParams rf = rf::reference_defaults();
    rf.noise_sigma_db = 0.0;
    std::mt19937_64 pick(3);
    std::uniform_real_distribution<double> start(0.0, 3e-3);
    const std::vector<std::string> keys{"4d2f8a1c", "e1b2079c", "00ff00ff", "93e6b705", "5a5a5a5a"};
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<engine::Reflector> a, b;
        for (std::size_t k = 0; k < keys.size(); ++k) {
            node::NodeConfig n = make_node("n" + std::to_string(k), keys[k]);
            n.distance_m = 0.8 + 0.3 * static_cast<double>(k);
            engine::Reflector r = engine::reflector_for(rf, n, 0);
            r.frames.push_back(node::emit_waveform(n, start(pick)));
            ((k + trial) % 2 ? a : b).push_back(r);
        }
        std::vector<engine::Reflector> both = a;
        both.insert(both.end(), b.begin(), b.end());
        rng::Engine gen(1);
        const auto ta = engine::superpose_trace(rf, a, 0.0, 5e-3, 1e6, 0, gen);
        const auto tb = engine::superpose_trace(rf, b, 0.0, 5e-3, 1e6, 0, gen);
        const auto tab = engine::superpose_trace(rf, both, 0.0, 5e-3, 1e6, 0, gen);
        const double leak = mw(rf.effective_leakage_dbm);
        for (std::size_t i = 0; i < tab.samples_dbm.size(); ++i) {
            const double lhs = mw(tab.samples_dbm[i]) - leak;
            const double rhs = (mw(ta.samples_dbm[i]) - leak) + (mw(tb.samples_dbm[i]) - leak);
            REQUIRE(lhs == Approx(rhs).epsilon(1e-9));
        }
    }
}

TEST_CASE("run_scenario: reference scenario, 100 s, noiseless") {
    const auto cfg = reference_scenario();
    const auto r = engine::run_scenario(cfg);
    REQUIRE(r.nodes.size() == 1);
    const auto& n = r.nodes[0];
    CHECK(n.cycles_completed == 9);
    CHECK(n.frames_emitted == 9);
    CHECK(n.frames_decoded == 9);
    CHECK(n.accepts == 9);
    CHECK(n.broadcasts == 9);
    CHECK(r.collision_events == 0);
    CHECK(std::abs(r.mean_measured_dr_db - 0.15) < 1e-3);
    for (const auto& f : r.frames) {
        CHECK(f.decode.key == cfg.nodes[0].frame.key);
        CHECK(f.decode.frame_start_s == Approx(f.start_s).epsilon(1e-9));
    }
    check_accounting(r);
}

TEST_CASE("run_scenario: attacker broadcasts are rejected with NoFrame") {
    auto cfg = reference_scenario(0.02);
    cfg.nodes.push_back(make_node("mallory", "0badc0de0badc0de0badc0de0badc0de"));
    cfg.attackers = {"mallory"};
    const auto r = engine::run_scenario(cfg);
    REQUIRE(r.nodes.size() == 2);
    CHECK(r.nodes[0].accepts == 9);
    CHECK(r.nodes[0].frames_decoded == 9);
    const auto& m = r.nodes[1];
    CHECK(m.attacker);
    CHECK(m.frames_emitted == 0);
    CHECK(m.broadcasts == 9);
    CHECK(m.accepts == 0);
    CHECK(m.rejects.at(monitor::RejectReason::NoFrame) == 9);
    check_accounting(r);
}

TEST_CASE("run_scenario: duration shorter than one cycle") {
    auto cfg = reference_scenario();
    cfg.duration_s = 5.0;
    const auto r = engine::run_scenario(cfg);
    CHECK(r.nodes[0].cycles_completed == 0);
    CHECK(r.frames.empty());
    CHECK(r.broadcasts.empty());
}

TEST_CASE("run_scenario is deterministic and thread-count independent") {
    auto cfg = reference_scenario(0.02);
    cfg.nodes.push_back(make_node("b", "e1b2079c44d5ff1a3350c6a8921e7d0b"));
    cfg.nodes.back().phase_jitter = 0.2;
    cfg.nodes.push_back(make_node("c", "93e6b7051fd4c28e"));
    cfg.nodes.back().phase_jitter = 0.5;

    std::vector<std::vector<double>> traces_a, traces_b;
    engine::RunOptions a{1, [&](const std::string&, const monitor::PowerTrace& t) { traces_a.push_back(t.samples_dbm); }};
    engine::RunOptions b{4, [&](const std::string&, const monitor::PowerTrace& t) { traces_b.push_back(t.samples_dbm); }};
    const auto ra = engine::run_scenario(cfg, a);
    const auto rb = engine::run_scenario(cfg, b);
    CHECK(dump(ra) == dump(rb));
    CHECK(traces_a == traces_b);
    CHECK(dump(engine::run_scenario(cfg)) == dump(engine::run_scenario(cfg, {3, {}})));

    const auto plain = dump(engine::run_scenario(cfg));
    cfg.seed = 8;
    CHECK(plain != dump(engine::run_scenario(cfg)));
    check_accounting(ra);
}

TEST_CASE("adding a node does not perturb another node's draws") {
    auto cfg = reference_scenario(0.02);
    cfg.nodes[0].phase_jitter = 0.3;
    const auto alone = engine::run_scenario(cfg);
    cfg.nodes.push_back(make_node("far", "e1b2079c44d5ff1a3350c6a8921e7d0b"));
    cfg.nodes.back().distance_m = 2.0;
    cfg.mode = engine::Fdm{2};
    cfg.nodes.back().channel = 1;
    const auto with_other = engine::run_scenario(cfg);
    std::vector<double> starts_alone, starts_with;
    for (const auto& f : alone.frames) starts_alone.push_back(f.start_s);
    for (const auto& f : with_other.frames) {
        if (f.node_id == "bfsn") starts_with.push_back(f.start_s);
    }
    CHECK(starts_alone == starts_with);
}

TEST_CASE("trace sink receives one trace per frame") {
    const auto cfg = reference_scenario(0.02);
    std::vector<std::string> names;
    engine::RunOptions opts;
    opts.sink = [&](const std::string& name, const monitor::PowerTrace& t) {
        names.push_back(name);
        CHECK(t.samples_dbm.size() == 9600);  // 6.4 ms plus 25% guard on each side at 1 MS/s
    };
    const auto r = engine::run_scenario(cfg, opts);
    REQUIRE(names.size() == 9);
    CHECK(names.front() == "bfsn_cycle1.csv");
    CHECK(names.back() == "bfsn_cycle9.csv");
    CHECK(r.trace_files == names);
}

TEST_CASE("FDM: simultaneous frames decode on distinct channels and collide on a shared one") {
    engine::ScenarioConfig cfg = reference_scenario(0.02);
    cfg.nodes.push_back(make_node("twin", "e1b2079c44d5ff1a3350c6a8921e7d0b"));
    cfg.duration_s = 30.0;
    cfg.mode = engine::Fdm{2};
    cfg.nodes[1].channel = 1;

    const auto split = engine::run_scenario(cfg);
    REQUIRE(!split.frames.empty());
    CHECK(split.frames[0].start_s == split.frames[1].start_s);
    CHECK(split.collision_events == 0);
    for (const auto& f : split.frames) CHECK(f.decode.status == monitor::DecodeStatus::Decoded);

    cfg.nodes[1].channel = 0;
    const auto shared = engine::run_scenario(cfg);
    long chip_errors = 0;
    for (const auto& f : shared.frames) {
        CHECK(f.collided);
        chip_errors += f.decode.status == monitor::DecodeStatus::ChipErrors ? 1 : 0;
    }
    CHECK(chip_errors >= 1);
    CHECK(shared.collision_events == static_cast<long>(shared.frames.size() / 2));
    CHECK(shared.nodes[0].accepts == 0);
    check_accounting(shared);
}

TEST_CASE("FDM with one node matches free running") {
    engine::ScenarioConfig cfg = reference_scenario(0.02);
    const auto free = engine::run_scenario(cfg);
    for (int k : {1, 3}) {
        cfg.mode = engine::Fdm{k};
        CHECK(dump(engine::run_scenario(cfg)) == dump(free));
    }
}

TEST_CASE("fdm_channelize") {
    engine::ScenarioConfig cfg = reference_scenario();
    cfg.nodes.push_back(make_node("b", "01"));
    cfg.nodes.push_back(make_node("c", "02"));
    cfg.nodes[1].channel = 2;
    cfg.nodes[2].channel = 2;
    CHECK_THROWS_AS(engine::fdm_channelize(cfg), DomainError);
    cfg.mode = engine::Fdm{3};
    const auto views = engine::fdm_channelize(cfg);
    REQUIRE(views.size() == 3);
    CHECK(views[0].node_indices == std::vector<std::size_t>{0});
    CHECK(views[1].node_indices.empty());
    CHECK(views[2].node_indices == std::vector<std::size_t>{1, 2});
    cfg.mode = engine::Fdm{2};
    CHECK_THROWS_AS(engine::fdm_channelize(cfg), ChannelOutOfRange);
    CHECK_THROWS_AS(engine::run_scenario(cfg), ConfigError);
}

TEST_CASE("property: slotted mode never collides") {
    std::mt19937_64 gen(21);
    for (int trial = 0; trial < 6; ++trial) {
        const int count = 2 + trial;
        engine::ScenarioConfig cfg;
        cfg.rf.noise_sigma_db = 0.0;
        cfg.duration_s = 40.0;
        engine::Slotted slotted;
        slotted.slot_period_s = 6.4e-3 * (1.0 + 0.5 * trial);
        std::vector<int> slots(static_cast<std::size_t>(count));
        std::iota(slots.begin(), slots.end(), 0);
        std::shuffle(slots.begin(), slots.end(), gen);
        for (int i = 0; i < count; ++i) {
            auto n = make_node("s" + std::to_string(i), "4d2f8a1c93e6b7051fd4c28e6a90b37e");
            n.phase_jitter = 0.5;
            cfg.nodes.push_back(n);
            slotted.slots[n.id] = slots[static_cast<std::size_t>(i)];
        }
        cfg.mode = slotted;
        cfg.seed = static_cast<std::uint64_t>(trial);
        const auto r = engine::run_scenario(cfg);
        CHECK(r.collision_events == 0);
        for (const auto& f : r.frames) {
            const double frame_len = slotted.slot_period_s * count;
            const double m = (f.start_s - slotted.slots.at(f.node_id) * slotted.slot_period_s) / frame_len;
            CHECK(std::abs(m - std::round(m)) < 1e-6);
            CHECK(f.decode.status == monitor::DecodeStatus::Decoded);
        }
        check_accounting(r);
    }
}

TEST_CASE("free-running nodes with identical timing collide without slots") {
    engine::ScenarioConfig cfg = reference_scenario();
    cfg.nodes.push_back(make_node("b", "e1b2079c44d5ff1a3350c6a8921e7d0b"));
    cfg.duration_s = 25.0;
    CHECK(engine::run_scenario(cfg).collision_events == 2);

    engine::Slotted slotted;
    slotted.slot_period_s = 10e-3;
    slotted.slots = {{"bfsn", 0}, {"b", 1}};
    cfg.mode = slotted;
    const auto r = engine::run_scenario(cfg);
    CHECK(r.collision_events == 0);
    CHECK(r.nodes[0].accepts + r.nodes[1].accepts == r.nodes[0].broadcasts + r.nodes[1].broadcasts);
}

TEST_CASE("scenario validation reports field paths") {
    auto cfg = reference_scenario();
    auto path_of = [](const engine::ScenarioConfig& c) {
        try {
            c.validate();
        } catch (const ConfigError& e) {
            return e.path();
        }
        return std::string("<valid>");
    };
    CHECK(path_of(cfg) == "<valid>");
    {
        auto c = cfg;
        c.duration_s = 0.0;
        CHECK(path_of(c) == "duration_s");
    }
    {
        auto c = cfg;
        c.nodes.push_back(c.nodes[0]);
        CHECK(path_of(c) == "nodes[1].id");
    }
    {
        auto c = cfg;
        c.nodes[0].frame.chip_rate_hz = 100e3;
        CHECK(path_of(c).starts_with("nodes[0]."));
    }
    {
        auto c = cfg;
        c.attackers = {"nobody"};
        CHECK(path_of(c) == "attackers[0]");
    }
    {
        auto c = cfg;
        c.mode = engine::Slotted{0.01, {}};
        CHECK(path_of(c) == "mode.slots.bfsn");
    }
    {
        auto c = cfg;
        c.nodes.clear();
        CHECK(path_of(c) == "nodes");
    }
}

TEST_CASE("collision_prob_analytic") {
    CHECK(engine::collision_prob_analytic(2, 6.4e-3, 10.0) == Approx(1.28e-3).epsilon(1e-12));
    CHECK(engine::collision_prob_analytic(2, 0.0, 10.0) == 0.0);
    CHECK(engine::collision_prob_analytic(2, 6.0, 10.0) == 1.0);
    const double r = 2.0 * 6.4e-3 / 10.0;
    CHECK(engine::collision_prob_analytic(4, 6.4e-3, 10.0) ==
          Approx(1.0 - (1.0 - r) * (1.0 - 2.0 * r) * (1.0 - 3.0 * r)).epsilon(1e-12));
    CHECK(engine::collision_prob_analytic(2, 6.4e-3, 10.0) ==
          Approx(oracle::pairwise_overlap_by_quadrature(6.4e-3, 10.0)).epsilon(1e-3));
    CHECK_THROWS_AS(engine::collision_prob_analytic(1, 6.4e-3, 10.0), DomainError);
    CHECK_THROWS_AS(engine::collision_prob_analytic(2, -1.0, 10.0), DomainError);
    CHECK_THROWS_AS(engine::collision_prob_analytic(2, 1.0, 0.0), DomainError);
}

TEST_CASE("collision_prob_mc") {
    const auto est = engine::collision_prob_mc(2, 6.4e-3, 10.0, 1'000'000, 7, 4);
    CHECK(std::abs(est.estimate - 1.28e-3) <= 3.0 * est.std_error);
    CHECK(est.std_error == Approx(std::sqrt(est.estimate * (1 - est.estimate) / 1e6)));

    CHECK(engine::collision_prob_mc(2, 0.0, 10.0, 10'000, 1).estimate == 0.0);
    const auto a = engine::collision_prob_mc(3, 0.1, 1.0, 100'000, 5, 1);
    const auto b = engine::collision_prob_mc(3, 0.1, 1.0, 100'000, 5, 8);
    CHECK(a.estimate == b.estimate);
    CHECK(engine::collision_prob_mc(2, 0.1, 1.0, 100'000, 6).estimate != a.estimate);
    CHECK_THROWS_AS(engine::collision_prob_mc(2, 0.1, 1.0, 0, 1), DomainError);
}

TEST_CASE("property: Monte Carlo converges on the exact pairwise value") {
    const double exact = 2.0 * 6.4e-3 / 10.0;
    int within = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto est = engine::collision_prob_mc(2, 6.4e-3, 10.0, 200'000, seed, 4);
        within += std::abs(est.estimate - exact) <= 4.0 * est.std_error ? 1 : 0;
    }
    CHECK(within >= 99);
}
