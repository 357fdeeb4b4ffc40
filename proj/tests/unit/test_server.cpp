#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "photon/io.hpp"
#include "photon/server.hpp"

using namespace photon;
using json = nlohmann::json;

namespace {

std::string data(const std::string& name) { return std::string(PHOTON_DATA_DIR) + "/" + name; }

serve::ServerOptions fast_options() {
    serve::ServerOptions o;
    o.port = 0;
    o.time_scale = 4.0;
    o.history = 200000;
    o.status_interval_s = 0.2;
    return o;
}

json call(serve::Server& s, const json& req) { return json::parse(s.command(req.dump()).body); }

/// Collects events of one type until `done` or the deadline.
std::vector<json> collect(serve::Server& s, const std::string& type, std::uint64_t after, double seconds,
                          const std::function<bool(const std::vector<json>&)>& done) {
    std::vector<json> out;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
    while (std::chrono::steady_clock::now() < deadline) {
        for (const auto& e : s.events().wait(after, 0.1)) {
            after = e.id;
            if (e.type == type) out.push_back(json::parse(e.data));
        }
        if (done(out)) break;
    }
    return out;
}

class Serve : public ::testing::Test {
protected:
    void SetUp() override {
        server = std::make_unique<serve::Server>(io::load_session(data("demo_session.json")), fast_options());
        port = server->start();
    }
    void TearDown() override { server->stop(); }

    std::unique_ptr<serve::Server> server;
    int port = 0;
};

}  // namespace

TEST_F(Serve, StatusEchoesRoster) {
    const auto st = call(*server, {{"cmd", "status"}});
    EXPECT_TRUE(st["ok"].get<bool>());
    ASSERT_EQ(st["roster"].size(), 5u);
    EXPECT_EQ(st["total_sensors"], 122);
    EXPECT_EQ(st["calibrated"], 122);
    EXPECT_EQ(st["roster"][0]["sensor_count"], 25);
    EXPECT_EQ(st["roster"][4]["keys"].back(), "m2k60");
    EXPECT_EQ(st["mode"]["kind"], "midi");
    EXPECT_TRUE(st["capture"].is_null());
    EXPECT_EQ(st["stats"]["bad_frames"], 0);
}

TEST_F(Serve, TypedErrors) {
    auto r = server->command("{nope");
    EXPECT_EQ(r.http_status, 400);
    EXPECT_EQ(json::parse(r.body)["error"]["type"], "bad_request");
    r = server->command(R"({"cmd":"warp","id":3})");
    EXPECT_EQ(r.http_status, 400);
    auto j = json::parse(r.body);
    EXPECT_EQ(j["error"]["type"], "unknown_command");
    EXPECT_EQ(j["id"], 3);
    r = server->command(R"({"cmd":"set_mode","mode":{"kind":"position_stream","subset":[],"stream_rate_hz":250}})");
    EXPECT_EQ(r.http_status, 409);
    EXPECT_EQ(json::parse(r.body)["error"]["type"], "validation");
    r = server->command(R"({"cmd":"set_mode","mode":{"kind":"position_stream","subset":["m1k1"],"stream_rate_hz":100}})");
    EXPECT_EQ(r.http_status, 409);
    r = server->command(R"({"cmd":"capture_rest"})");
    EXPECT_EQ(r.http_status, 409);
    r = server->command(R"({"cmd":"record_start"})");
    EXPECT_EQ(r.http_status, 409);
    EXPECT_EQ(json::parse(r.body)["error"]["type"], "config");
    r = server->command(R"({"cmd":"capture_begin","key":"m9k1"})");
    EXPECT_GE(r.http_status, 400);
    EXPECT_FALSE(json::parse(r.body)["ok"].get<bool>());
}

TEST_F(Serve, RepeatedIdReturnsTheCachedReply) {
    const json req = {{"cmd", "set_mode"},
                      {"id", "m-1"},
                      {"mode", {{"kind", "position_stream"}, {"subset", {"m1k3"}}, {"stream_rate_hz", 250}}}};
    const auto a = server->command(req.dump());
    ASSERT_EQ(a.http_status, 200) << a.body;
    // Change the mode under it; a retry of the same id must not re-apply.
    ASSERT_EQ(server->command(R"({"cmd":"set_mode","mode":{"kind":"midi"}})").http_status, 200);
    const auto b = server->command(req.dump());
    EXPECT_EQ(b.body, a.body);
    EXPECT_EQ(call(*server, {{"cmd", "status"}})["mode"]["kind"], "midi");
}

TEST_F(Serve, StreamDeliversAtLeast250FramesPerSecond) {
    const auto after = server->events().last_id();
    const auto r = call(*server, {{"cmd", "set_mode"},
                                  {"mode", {{"kind", "position_stream"}, {"subset", {"m1k3"}}, {"stream_rate_hz", 250}}}});
    ASSERT_TRUE(r["ok"].get<bool>()) << r.dump();
    const auto frames = collect(*server, "position", after, 5.0, [](const std::vector<json>& f) {
        return f.size() > 2 && f.back()["t_s"].get<double>() - f.front()["t_s"].get<double>() > 1.5;
    });
    ASSERT_GT(frames.size(), 2u);
    const double t0 = frames.front()["t_s"].get<double>() + 0.1;
    int in_window = 0;
    for (const auto& f : frames) {
        const double t = f["t_s"].get<double>();
        if (t >= t0 && t < t0 + 1.0) ++in_window;
        EXPECT_EQ(f["key"], "m1k3");
        EXPECT_NEAR(f["mm"].get<double>(), 0.0, 0.3);
    }
    EXPECT_GE(in_window, 250);
}

TEST_F(Serve, CaptureWizardCommitsAnEntry) {
    const auto after = server->events().last_id();
    auto r = call(*server, {{"cmd", "capture_begin"}, {"key", "m1k7"}, {"client", "c1"}});
    ASSERT_TRUE(r["ok"].get<bool>()) << r.dump();
    EXPECT_EQ(r["capture"]["phase"], "capture_rest");
    // Mode changes wait for the capture.
    EXPECT_EQ(server->command(R"({"cmd":"set_mode","mode":{"kind":"position_stream","subset":["m1k7"]}})").http_status,
              409);
    EXPECT_EQ(server->command(R"({"cmd":"capture_full"})").http_status, 409);
    r = call(*server, {{"cmd", "capture_rest"}});
    EXPECT_NEAR(r["median_counts"].get<double>(), 3800, 30);
    EXPECT_EQ(r["capture"]["phase"], "capture_full");
    r = call(*server, {{"cmd", "capture_full"}});
    EXPECT_NEAR(r["median_counts"].get<double>(), 2310, 30);
    EXPECT_EQ(r["capture"]["phase"], "capture_anchor");
    EXPECT_EQ(server->command(R"({"cmd":"capture_anchor","mm":9.5})").http_status, 409);
    r = call(*server, {{"cmd", "capture_anchor"}, {"mm", 4.5}});
    ASSERT_TRUE(r["ok"].get<bool>()) << r.dump();
    r = call(*server, {{"cmd", "capture_commit"}});
    ASSERT_TRUE(r["ok"].get<bool>()) << r.dump();
    EXPECT_EQ(r["entry"]["key"], "m1k7");
    EXPECT_EQ(r["entry"]["anchors"].size(), 1u);
    EXPECT_TRUE(call(*server, {{"cmd", "status"}})["capture"].is_null());

    const auto cal = collect(*server, "calibration", after, 2.0, [](const auto& v) { return !v.empty(); });
    ASSERT_EQ(cal.size(), 1u);
    EXPECT_EQ(cal[0]["key"], "m1k7");
    const auto steps = collect(*server, "capture", after, 0.5, [](const auto& v) { return v.size() >= 4; });
    EXPECT_GE(steps.size(), 4u);
}

TEST_F(Serve, BlockedKeyStaysAtFullStep) {
    const auto before = call(*server, {{"cmd", "get_session"}});
    ASSERT_TRUE(call(*server, {{"cmd", "capture_begin"}, {"key", "m2k2"}})["ok"].get<bool>());
    ASSERT_TRUE(call(*server, {{"cmd", "capture_rest"}})["ok"].get<bool>());
    const auto r = server->command(R"({"cmd":"capture_full","sim_hold_mm":0.05})");
    EXPECT_EQ(r.http_status, 422) << r.body;
    EXPECT_EQ(json::parse(r.body)["error"]["type"], "calibration");
    EXPECT_EQ(call(*server, {{"cmd", "status"}})["capture"]["phase"], "capture_full");
    // Unblocked, the same capture completes.
    ASSERT_TRUE(call(*server, {{"cmd", "capture_full"}})["ok"].get<bool>());
    EXPECT_TRUE(call(*server, {{"cmd", "capture_abort"}})["aborted"].get<bool>());
    EXPECT_EQ(call(*server, {{"cmd", "get_session"}})["session"], before["session"]);
}

TEST_F(Serve, DisconnectedClientAbortsItsCapture) {
    ASSERT_TRUE(call(*server, {{"cmd", "capture_begin"}, {"key", "m1k9"}, {"client", "tab-2"}})["ok"].get<bool>());
    server->client_gone("someone-else");
    EXPECT_FALSE(call(*server, {{"cmd", "status"}})["capture"].is_null());
    server->client_gone("tab-2");
    EXPECT_TRUE(call(*server, {{"cmd", "status"}})["capture"].is_null());
    EXPECT_FALSE(call(*server, {{"cmd", "capture_abort"}})["aborted"].get<bool>());
}

TEST_F(Serve, HttpStatusAndCommand) {
    httplib::Client cli("127.0.0.1", port);
    auto res = cli.Get("/api/status");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(json::parse(res->body)["total_sensors"], 122);
    res = cli.Post("/api/command", R"({"cmd":"nope"})", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 400);
    res = cli.Post("/api/command", R"({"cmd":"set_mode","mode":{"kind":"midi"}})", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
}

TEST_F(Serve, SseCarriesEventsAndDisconnectAbortsCapture) {
    ASSERT_TRUE(call(*server, {{"cmd", "capture_begin"}, {"key", "m1k11"}, {"client", "sse-1"}})["ok"].get<bool>());
    std::string seen;
    {
        httplib::Client cli("127.0.0.1", port);
        cli.set_read_timeout(5, 0);
        cli.Get("/api/stream?client=sse-1&after=0", [&](const char* d, std::size_t n) {
            seen.append(d, n);
            return seen.find("event: status") == std::string::npos;
        });
    }
    EXPECT_NE(seen.find("event: capture"), std::string::npos);
    EXPECT_NE(seen.find("id: 1\n"), std::string::npos);
    bool aborted = false;
    for (int i = 0; i < 50 && !aborted; ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        aborted = call(*server, {{"cmd", "status"}})["capture"].is_null();
    }
    EXPECT_TRUE(aborted);
}

TEST(ServeScore, PlaysTheScoreAsKeyEvents) {
    auto o = fast_options();
    o.score = io::load_score(data("demo_score.json"));
    serve::Server s(io::load_session(data("demo_session.json")), o);
    s.start();
    const auto events = collect(s, "key_event", 0, 10.0, [](const auto& v) { return v.size() >= 16; });
    s.stop();
    ASSERT_EQ(events.size(), 16u);
    EXPECT_EQ(events[0]["kind"], "note_on");
    EXPECT_EQ(events[0]["key"], "m1k24");
    EXPECT_GE(events[0]["velocity"].get<int>(), 1);
    EXPECT_LE(events[0]["velocity"].get<int>(), 127);
}

TEST(ServeRecord, StartStopWritesACapture) {
    auto o = fast_options();
    const auto dir = std::filesystem::temp_directory_path() / "photon_serve_rec";
    std::filesystem::create_directories(dir);
    o.record_dir = dir.string();
    serve::Server s(io::load_session(data("demo_session.json")), o);
    s.start();
    auto r = call(s, {{"cmd", "record_start"}, {"name", "take-1"}});
    ASSERT_TRUE(r["ok"].get<bool>()) << r.dump();
    EXPECT_EQ(s.command(R"({"cmd":"record_start","name":"x"})").http_status, 409);
    EXPECT_EQ(s.command(R"({"cmd":"set_mode","mode":{"kind":"position_stream","subset":["m1k1"]}})").http_status, 200);
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    r = call(s, {{"cmd", "record_stop"}});
    ASSERT_TRUE(r["ok"].get<bool>()) << r.dump();
    EXPECT_GT(r["chunks"].get<int>(), 0);
    s.stop();
    const auto cap = bus::Capture::from_text(io::read_text((dir / "take-1.cap").string()));
    EXPECT_FALSE(cap.chunks.empty());
    EXPECT_EQ(s.command(R"({"cmd":"status"})").http_status, 503);
    std::filesystem::remove_all(dir);
}

TEST(ServeRecord, RejectsUnsafeNames) {
    auto o = fast_options();
    o.record_dir = std::filesystem::temp_directory_path().string();
    serve::Server s(io::load_session(data("demo_session.json")), o);
    s.start();
    EXPECT_EQ(s.command(R"({"cmd":"record_start","name":"../x"})").http_status, 409);
    s.stop();
}
