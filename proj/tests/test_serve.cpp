// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>

#include "helpers.hpp"
#include "sgr/errors.hpp"
#include "sgr/serve.hpp"

using namespace sgr;
using namespace sgr::testing;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

namespace {

std::shared_ptr<const ModelSource> tiny_source(std::uint64_t seed = 1) {
  auto spec = tiny_spec(seed);
  spec.class_names = {"a", "b", "c"};
  Model<double> m(spec);
  return std::make_shared<const ModelSource>(encode_checkpoint(m));
}

std::string frame_message(const KeypointFrame& f) {
  const std::string rec = write_frame_record(f);
  return "{\"type\":\"frame\"," + rec.substr(1);
}

std::string hello(const std::string& extra = "") {
  return "{\"type\":\"hello\",\"layout\":\"holistic543\"" + extra + "}";
}

}  // namespace

TEST_CASE("emission rule") {
  StreamConfig c;
  for (std::size_t n = 1; n < 30; ++n) CHECK_FALSE(should_emit(n, c));
  CHECK(should_emit(30, c));
  CHECK_FALSE(should_emit(31, c));
  CHECK(should_emit(35, c));
  CHECK_THROWS_AS((StreamConfig{1, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((StreamConfig{30, 0}.validate()), ConfigError);
}

TEST_CASE("streaming matches offline windows bit for bit with bounded memory") {
  const auto source = tiny_source(3);
  const auto seq = random_sequence(73, 8);
  StreamSession session(source->instantiate());
  std::vector<Prediction> online;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    auto p = session.handle_frame(seq.frames[i]);
    if (i + 1 < 30) CHECK_FALSE(p.has_value());
    if (i + 1 == 30) CHECK(p.has_value());
    if (p) online.push_back(*p);
    CHECK(session.buffered() <= 30);
  }
  CHECK(session.frames_seen() == 73);
  auto model = source->instantiate();
  const auto offline = offline_window_predictions(*model, seq);
  REQUIRE(online.size() == offline.size());
  CHECK(online.size() == 9);
  for (std::size_t k = 0; k < online.size(); ++k) {
    CHECK(online[k].window_end == offline[k].window_end);
    CHECK(online[k].label == offline[k].label);
    CHECK(online[k].probs == offline[k].probs);
  }
}

TEST_CASE("stream rejects bad frames without consuming them") {
  const auto source = tiny_source();
  StreamSession s(source->instantiate());
  auto seq = random_sequence(3, 1);
  s.handle_frame(seq.frames[1]);
  CHECK_THROWS_AS(s.handle_frame(seq.frames[0]), OrderError);
  auto nan = seq.frames[2];
  nan.landmarks[4].x = NAN;
  CHECK_THROWS_AS(s.handle_frame(nan), ValueError);
  CHECK(s.frames_seen() == 1);
  CHECK_NOTHROW(s.handle_frame(seq.frames[2]));
}

TEST_CASE("protocol messages and close codes") {
  const auto source = tiny_source();
  const auto seq = random_sequence(31, 4);

  SUBCASE("happy path") {
    ProtocolSession p(*source);
    const auto r = p.handle_text(hello(",\"stride\":1"));
    REQUIRE(r.messages.size() == 1);
    const auto ready = nlohmann::json::parse(r.messages[0]);
    CHECK(ready["type"] == "ready");
    CHECK(ready["classes"] == nlohmann::json::array({"a", "b", "c"}));
    std::size_t predictions = 0;
    for (const auto& f : seq.frames) {
      const auto fr = p.handle_text(frame_message(f));
      CHECK_FALSE(fr.close_code.has_value());
      for (const auto& m : fr.messages) {
        const auto j = nlohmann::json::parse(m);
        CHECK(j["type"] == "prediction");
        CHECK(j["probs"].size() == 3);
        ++predictions;
      }
    }
    CHECK(predictions == 2);
  }
  SUBCASE("missing landmarks are accepted") {
    ProtocolSession p(*source);
    p.handle_text(hello());
    auto f = seq.frames[0];
    f.landmarks[3] = Landmark::missing();
    CHECK_FALSE(p.handle_text(frame_message(f)).close_code.has_value());
  }
  SUBCASE("layout mismatch") {
    ProtocolSession p(*source);
    CHECK(p.handle_text("{\"type\":\"hello\",\"layout\":\"paper522\"}").close_code == kCloseLayout);
    CHECK(p.closed());
    CHECK(p.handle_text(hello()).messages.empty());
  }
  SUBCASE("wrong landmark count") {
    ProtocolSession p(*source);
    p.handle_text(hello());
    CHECK(p.handle_text("{\"type\":\"frame\",\"t\":0,\"lm\":[[0,0,0]]}").close_code == kCloseLayout);
  }
  SUBCASE("bad values") {
    ProtocolSession p(*source);
    p.handle_text(hello());
    CHECK(p.handle_text("{\"type\":\"frame\",\"t\":0.5,\"lm\":[]}").close_code == kCloseBadValue);
    ProtocolSession q(*source);
    CHECK(q.handle_text(hello(",\"stride\":0")).close_code == kCloseBadValue);
    ProtocolSession r(*source);
    CHECK(r.handle_text("{not json").close_code == kCloseBadValue);
    ProtocolSession s(*source);
    s.handle_text(hello());
    s.handle_text(frame_message(seq.frames[5]));
    CHECK(s.handle_text(frame_message(seq.frames[2])).close_code == kCloseBadValue);
  }
  SUBCASE("ordering") {
    ProtocolSession p(*source);
    CHECK(p.handle_text(frame_message(seq.frames[0])).close_code == kCloseProtocolOrder);
    ProtocolSession q(*source);
    q.handle_text(hello());
    CHECK(q.handle_text(hello()).close_code == kCloseProtocolOrder);
    ProtocolSession r(*source);
    CHECK(r.handle_text("{\"type\":\"bye\"}").close_code == kCloseProtocolOrder);
  }
}

TEST_CASE("websocket round trip") {
  ServeOptions opt;
  opt.port = 0;
  opt.threads = 2;
  opt.stream.stride = 1;
  WsServer server(opt, tiny_source(2));
  const unsigned short port = server.start();
  REQUIRE(port != 0);

  boost::asio::io_context ioc;
  tcp::resolver resolver(ioc);
  websocket::stream<tcp::socket> ws(ioc);
  boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
  ws.handshake("127.0.0.1", "/");
  ws.text(true);
  ws.write(boost::asio::buffer(hello()));
  beast::flat_buffer buf;
  ws.read(buf);
  CHECK(nlohmann::json::parse(beast::buffers_to_string(buf.data()))["type"] == "ready");
  buf.clear();

  const auto seq = random_sequence(31, 6);
  auto model = tiny_source(2)->instantiate();
  StreamConfig cfg;
  cfg.stride = 1;
  const auto offline = offline_window_predictions(*model, seq, cfg);
  REQUIRE(offline.size() == 2);
  std::vector<nlohmann::json> got;
  for (const auto& f : seq.frames) ws.write(boost::asio::buffer(frame_message(f)));
  for (int i = 0; i < 2; ++i) {
    ws.read(buf);
    got.push_back(nlohmann::json::parse(beast::buffers_to_string(buf.data())));
    buf.clear();
  }
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(got[k]["window_end"] == offline[k].window_end);
    CHECK(got[k]["probs"].get<std::vector<double>>() == offline[k].probs);
  }

  ws.write(boost::asio::buffer(std::string("{\"type\":\"frame\",\"t\":100,\"lm\":[]}")));
  beast::error_code ec;
  ws.read(buf, ec);
  CHECK(ec == websocket::error::closed);
  CHECK(ws.reason().code == kCloseLayout);
  server.stop();
}

TEST_CASE("latency summaries") {
  const auto one = summarize_latency({4.0});
  CHECK(one.n == 1);
  CHECK(one.p50 == 4.0);
  CHECK(one.p95 == 4.0);
  CHECK(one.mean == 4.0);
  const auto s = summarize_latency({1.0, 2.0, 3.0, 4.0, 5.0});
  CHECK(s.p50 == 3.0);
  CHECK(s.p95 == doctest::Approx(4.8));
  const auto b = bench_latency(*tiny_source(), 5);
  CHECK(b.n == 5);
  CHECK(b.p95 >= b.p50);
}
