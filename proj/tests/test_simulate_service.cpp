#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include <drqft/service.hpp>

#include "oracle_suites.hpp"

using namespace drqft;
namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;

std::string fixture_path(const std::string& name) { return std::string(DRQFT_PROBLEMS_DIR) + "/" + name + ".json"; }
problem fixture(const std::string& name) { return load_problem(fixture_path(name)); }

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DRQFT_CLI) + " " + args + " > /dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("drqft_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

template <class F>
void expect_code(F&& f, error_code c) {
    try {
        f();
        ADD_FAILURE() << "no error raised";
    } catch (const error& e) {
        EXPECT_EQ(e.code(), c) << e.what();
    }
}

} // namespace

TEST(Simulate, RefinementIsExact) {
    const auto loop = oracles::ex3_loop();
    const auto a = simulate(loop, reference_signal::step(), 6.0, 8);
    const auto b = simulate(loop, reference_signal::step(), 6.0, 16);
    ASSERT_EQ(b.t.size(), 2 * (a.t.size() - 1) + 1);
    for (std::size_t i = 0; i < a.t.size(); ++i) {
        EXPECT_NEAR(a.t[i], b.t[2 * i], 1e-12);
        EXPECT_NEAR(a.y[i], b.y[2 * i], 1e-10 * (1 + std::abs(a.y[i])));
    }
}

TEST(Simulate, SlowSamplesMatchDiscreteClosedLoop) {
    const auto loop = oracles::ex3_loop();
    const auto tr = simulate(loop, reference_signal::step(), 20.4, 8);
    const auto cl = series(series(feedback_unity(loop.open_loop()), loop.prefilter_d), starred_transform(reference_signal::step(), 0.4));
    const auto seq = impulse_series(cl, 50);
    ASSERT_GE(tr.y_slow.size(), 50u);
    for (int k = 0; k < 50; ++k) EXPECT_NEAR(tr.y_slow[k], seq[k], 1e-6) << k;
}

TEST(Simulate, HarmonicSynthesisMatchesSimulation) {
    const auto r = oracles::harmonic_vs_simulation(0.02);
    EXPECT_TRUE(r.pass) << r.worst;
}

TEST(Simulate, StepRippleOfExample3) {
    const auto p = fixture("ex3");
    const auto tr = simulate(p.loop(), reference_signal::step(), p.t_end, p.substeps);
    const auto rep = ripple_metrics(tr, p.timing.Ts, 0);
    EXPECT_NEAR(rep.dominant_ripple_frequency, 3 * pi / 0.4, 0.01 * 3 * pi / 0.4);
    EXPECT_NEAR(rep.fundamental_amplitude, 1.0, 1e-3);
    const double w = 3 * pi / 0.4;
    const double sim = std::abs(transient_transform(tr, w, rep.fundamental_amplitude));
    const double pred = 0.4 * std::abs(output_spectrum(p.loop(), reference_signal::step(), w));
    EXPECT_NEAR(sim, pred, 0.01 * pred);
}

TEST(Simulate, NotchRemovesRipple) {
    const auto a = fixture("ex9"), b = fixture("ex11");
    const auto ta = simulate(a.loop(), reference_signal::step(), a.t_end, a.substeps);
    const auto tb = simulate(b.loop(), reference_signal::step(), b.t_end, b.substeps);
    const auto ra = ripple_metrics(ta, 0.4, 0);
    const double after = std::abs(transient_transform(tb, ra.dominant_ripple_frequency, ripple_metrics(tb, 0.4, 0).fundamental_amplitude));
    EXPECT_GE(20 * std::log10(ra.dominant_ripple_level / after), 10.0);
}

TEST(Simulate, SinusoidRippleFit) {
    const auto loop = oracles::ex3_loop();
    const double w0 = 0.5 * pi / 0.4;
    const auto tr = simulate(loop, reference_signal::sinusoid(1.0, w0), 40.0, 16);
    const auto rep = ripple_metrics(tr, 0.4, w0);
    const auto h = make_harmonic_response(loop, w0, 8);
    EXPECT_NEAR(rep.fundamental_amplitude, std::abs(h.terms[8].amplitude), 1e-3);
    EXPECT_GT(rep.dominant_ripple_frequency, pi / 0.4);
}

TEST(Simulate, Errors) {
    const auto loop = oracles::ex3_loop();
    expect_code([&] { (void)simulate(loop, reference_signal::step(), 0.0); }, error_code::invalid_argument);
    const auto tr = simulate(loop, reference_signal::step(), 1.0, 4);
    expect_code([&] { (void)ripple_metrics(tr, 0.4, 0); }, error_code::insufficient_steady_state);
    expect_code([&] { (void)dual_rate_loop::make(rational_tf(polynomial{1, 1}, polynomial{1, 2}), loop.g_fast, loop.g_slow, loop.timing); },
                error_code::improper_tf);
}

TEST(Simulate, RwipPlant) {
    expect_code([] { (void)rwip_plant(0); }, error_code::non_positive_inertia);
    expect_code([] { (void)rwip_plant(300); }, error_code::invalid_argument);
    // the gain-only reading keeps the nominal poles and scales the gain
    const auto nom = rwip_plant(290), g = rwip_plant(100, true), phys = rwip_plant(100, false);
    const auto pn = nom.den().roots(), pg = g.den().roots();
    ASSERT_EQ(pn.size(), pg.size());
    EXPECT_LT(std::abs(g.den()(cplx(0.7)) / g.den().coeff(g.den().degree()) - nom.den()(cplx(0.7)) / nom.den().coeff(nom.den().degree())), 1e-9);
    EXPECT_NE(std::abs(phys.freq(1.0)), std::abs(nom.freq(1.0)));
}

TEST(Problem, SchemaErrors) {
    expect_code([] { (void)parse_problem(io::json::parse(R"({"plant": {}})")); }, error_code::schema);
    auto j = io::json::parse(slurp(fixture_path("ex3")));
    j["timing"]["N"] = 2.5;
    expect_code([&] { (void)parse_problem(j); }, error_code::schema);
    j = io::json::parse(slurp(fixture_path("ex3")));
    j["specs"]["mu"] = 1.5;
    expect_code([&] { (void)parse_problem(j); }, error_code::schema);
}

TEST(Problem, AllFixturesLoad) {
    for (const auto& e : fs::directory_iterator(DRQFT_PROBLEMS_DIR)) {
        if (e.path().extension() != ".json") continue;
        EXPECT_NO_THROW((void)load_problem(e.path().string())) << e.path();
    }
}

TEST(Problem, GainEditTranslatesCurve) {
    const auto p = fixture("ex9");
    const auto edited = apply_controller_edit(p, io::json{{"gain_db", 6.0}});
    const auto c0 = nichols_curve_of(p.loop().open_loop(), 256);
    const auto c1 = nichols_curve_of(p.loop(edited).open_loop(), 256);
    ASSERT_EQ(c0.samples.size(), c1.samples.size());
    for (std::size_t i = 0; i < c0.samples.size(); ++i) {
        if (c0.samples[i].arc) continue;
        EXPECT_NEAR(c1.samples[i].phase_deg, c0.samples[i].phase_deg, 1e-9);
        EXPECT_NEAR(c1.samples[i].gain_db - c0.samples[i].gain_db, 6.0, 1e-9);
    }
}

TEST(Analyze, ExitCodeIsFunctionOfRecord) {
    const auto rec = analyze_problem(fixture("ex3"));
    EXPECT_EQ(analyze_exit_code(rec), 0);
    EXPECT_EQ(analyze_exit_code(io::json::parse(rec.dump())), 0);
    auto bad = rec;
    bad["stability"]["oracle"]["status"] = "unstable";
    EXPECT_EQ(analyze_exit_code(bad), 1);
    bad = rec;
    bad["validation"] = {{"all_pass", false}};
    EXPECT_EQ(analyze_exit_code(bad), 1);
}

TEST(Analyze, Example7WorstOffender) {
    const auto rec = analyze_problem(fixture("ex7"));
    EXPECT_EQ(analyze_exit_code(rec), 1);
    const auto& rm = rec.at("robust_margin");
    EXPECT_FALSE(rm.at("pass").get<bool>());
    EXPECT_NEAR(rm.at("worst_parameters")[0].get<double>(), 2.5, 1e-9);
    EXPECT_NEAR(rm.at("worst_frequency").get<double>(), pi / 0.4, 0.05 * pi / 0.4);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run_cli("analyze " + fixture_path("ex3")), 0);
    EXPECT_EQ(run_cli("analyze " + fixture_path("ex7")), 1);
    EXPECT_EQ(run_cli("analyze " + fixture_path("rwip_pid")), 1);
    EXPECT_EQ(run_cli("analyze /nonexistent/problem.json"), 2);
    EXPECT_EQ(run_cli("simulate " + fixture_path("ex3") + " --t-end 0"), 2);
    EXPECT_EQ(run_cli("simulate " + fixture_path("ex3") + " --ref triangle"), 2);
}

TEST(Cli, BoundsFiles) {
    const auto empty = scratch("empty");
    EXPECT_EQ(run_cli("bounds " + fixture_path("ex3") + " --out " + empty.string()), 0);
    EXPECT_TRUE(fs::is_empty(empty));
    const auto dir = scratch("ex9");
    ASSERT_EQ(run_cli("bounds " + fixture_path("ex9") + " --out " + dir.string()), 0);
    int json = 0, csv = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        json += e.path().extension() == ".json";
        csv += e.path().extension() == ".csv";
    }
    EXPECT_EQ(json, 13);
    EXPECT_EQ(csv, 13);
    fs::remove_all(empty);
    fs::remove_all(dir);
}

TEST(Cli, SimulateWritesTrace) {
    const auto dir = scratch("sim");
    fs::create_directories(dir);
    const auto out = (dir / "trace.csv").string();
    ASSERT_EQ(run_cli("simulate " + fixture_path("ex3") + " --ref sin:3.9 --t-end 8 --out " + out), 0);
    std::ifstream in(out);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header.substr(0, 2), "t,");
    fs::remove_all(dir);
}

TEST(Service, BoundariesMatchCli) {
    session_store store;
    const auto posted = store.post_problem(slurp(fixture_path("ex9")));
    ASSERT_EQ(posted.status, 201);
    const auto res = store.boundaries(posted.body["id"], std::nullopt);
    ASSERT_EQ(res.status, 200);
    const auto dir = scratch("cmp");
    ASSERT_EQ(run_cli("bounds " + fixture_path("ex9") + " --out " + dir.string()), 0);
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    const auto& list = res.body["boundaries"];
    ASSERT_EQ(files.size(), list.size());
    for (std::size_t i = 0; i < files.size(); ++i)
        EXPECT_EQ(io::json::parse(slurp(files[i].string())).dump(), list[i].dump()) << files[i];
    fs::remove_all(dir);
}

TEST(Service, ControllerEditKeepsBoundaryCache) {
    session_store store;
    const auto id = store.post_problem(slurp(fixture_path("ex9"))).body["id"].get<std::string>();
    ASSERT_EQ(store.boundaries(id, std::nullopt).status, 200);
    const long before = store.boundary_computations();
    EXPECT_EQ(before, 13);
    const io::json notch = {{"sections", {{{"num", {0.75, 0.75 * 0.24, -0.75 * 0.52 * 0.76}}, {"den", {1, 0, -0.25}}}}}};
    const auto r = store.controller(id, notch.dump());
    ASSERT_EQ(r.status, 200) << r.body.dump();
    EXPECT_EQ(store.boundary_computations(), before);
    bool seen = false;
    for (const auto& b : r.body["validation"]["boundaries"]) {
        EXPECT_TRUE(b["pass"].get<bool>()) << b["label"];
        if (b["label"] == "#10") seen = true;
    }
    EXPECT_TRUE(seen);
    EXPECT_TRUE(r.body.contains("L0_curve"));
    EXPECT_TRUE(r.body.contains("margins"));
}

TEST(Service, ErrorStatuses) {
    session_store store;
    EXPECT_EQ(store.boundaries("p999", std::nullopt).status, 404);
    EXPECT_EQ(store.post_problem("{not json").status, 400);
    EXPECT_EQ(store.post_problem(R"({"timing": {"Ts": 0.1}})").status, 400);
    const auto id = store.post_problem(slurp(fixture_path("ex3"))).body["id"].get<std::string>();
    const auto neg = store.boundaries(id, -1.0);
    EXPECT_EQ(neg.status, 422);
    EXPECT_TRUE(neg.body.contains("error"));
    EXPECT_EQ(store.simulate_request(id, R"({"t_end": -1})").status, 422);
    EXPECT_EQ(store.controller("nope", "{}").status, 404);
}

TEST(Service, HttpRoundTrip) {
    httplib::Server srv;
    session_store store;
    install_routes(srv, store);
    const int port = srv.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread th([&] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    {
        httplib::Client cli("127.0.0.1", port);
        auto post = cli.Post("/problems", slurp(fixture_path("ex3")), "application/json");
        ASSERT_TRUE(post);
        EXPECT_EQ(post->status, 201);
        const auto id = io::json::parse(post->body)["id"].get<std::string>();
        auto missing = cli.Get("/problems/zzz/boundaries");
        ASSERT_TRUE(missing);
        EXPECT_EQ(missing->status, 404);
        auto b = cli.Get("/problems/" + id + "/boundaries?omega=abc");
        ASSERT_TRUE(b);
        EXPECT_EQ(b->status, 422);
        auto sim = cli.Post("/problems/" + id + "/simulate", R"({"t_end": 6})", "application/json");
        ASSERT_TRUE(sim);
        EXPECT_EQ(sim->status, 200);
        const auto body = io::json::parse(sim->body);
        EXPECT_FALSE(body["trace"]["y"].empty());
        auto ctl = cli.Post("/problems/" + id + "/controller", R"({"gain": 1.0})", "application/json");
        ASSERT_TRUE(ctl);
        EXPECT_EQ(ctl->status, 200);
        EXPECT_TRUE(io::json::parse(ctl->body)["stability"]["stable"].get<bool>());
    }
    srv.stop();
    th.join();
}
