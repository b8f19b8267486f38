// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <csignal>
#include <deque>
#include <iostream>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "sgr/errors.hpp"
#include "sgr/serve.hpp"

namespace sgr {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, const ModelSource& source, const ServeOptions& options)
      : ws_(std::move(socket)), protocol_(source, options.stream), options_(options) {}

  void run() {
    websocket::stream_base::timeout t;
    t.handshake_timeout = std::chrono::seconds(30);
    t.idle_timeout = std::chrono::seconds(2 * options_.ping_interval_s);
    t.keep_alive_pings = true;
    ws_.set_option(t);
    ws_.text(true);
    ws_.async_accept(beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return;
    ProtocolReply reply;
    if (!ws_.got_text()) {
      reply.close_code = kCloseProtocolOrder;
      reply.close_reason = "binary frames are not accepted";
    } else {
      reply = protocol_.handle_text(beast::buffers_to_string(buffer_.data()));
    }
    buffer_.consume(buffer_.size());
    for (auto& m : reply.messages) queue_.push_back(std::move(m));
    if (reply.close_code) {
      close_code_ = *reply.close_code;
      close_reason_ = reply.close_reason.substr(0, 120);
    }
    if (!writing_) flush();
    if (!close_code_) do_read();
  }

  void flush() {
    if (queue_.empty()) {
      writing_ = false;
      if (close_code_ && !closing_) {
        closing_ = true;
        websocket::close_reason cr(static_cast<websocket::close_code>(*close_code_), close_reason_);
        ws_.async_close(cr, [self = shared_from_this()](beast::error_code) {});
      }
      return;
    }
    writing_ = true;
    ws_.async_write(net::buffer(queue_.front()),
                    beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) return;
    queue_.pop_front();
    flush();
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  ProtocolSession protocol_;
  const ServeOptions& options_;
  std::deque<std::string> queue_;
  bool writing_ = false;
  bool closing_ = false;
  std::optional<int> close_code_;
  std::string close_reason_;
};

}  // namespace

struct WsServer::Impl {
  ServeOptions options;
  std::shared_ptr<const ModelSource> source;
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::optional<net::signal_set> signals;
  std::vector<std::thread> threads;

  void do_accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (!acceptor.is_open()) return;
      if (!ec) std::make_shared<WsSession>(std::move(socket), *source, options)->run();
      do_accept();
    });
  }
};

WsServer::WsServer(ServeOptions options, std::shared_ptr<const ModelSource> source)
    : impl_(std::make_unique<Impl>()) {
  options.stream.validate();
  if (options.threads < 1) throw ConfigError("serve needs >= 1 thread");
  if (options.ping_interval_s < 1) throw ConfigError("ping interval must be >= 1 s");
  impl_->options = std::move(options);
  impl_->source = std::move(source);
}

WsServer::~WsServer() {
  stop();
  wait();
}

unsigned short WsServer::start() {
  auto& im = *impl_;
  beast::error_code ec;
  const auto address = net::ip::make_address(im.options.host, ec);
  if (ec) throw ConfigError("bad host '" + im.options.host + "'");
  const tcp::endpoint endpoint(address, im.options.port);
  im.acceptor.open(endpoint.protocol(), ec);
  if (!ec) im.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) im.acceptor.bind(endpoint, ec);
  if (!ec) im.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw IoError("cannot listen on " + im.options.host + ":" + std::to_string(im.options.port) + ": " + ec.message());
  if (im.options.handle_signals) {
    im.signals.emplace(im.ioc, SIGINT, SIGTERM);
    im.signals->async_wait([this](beast::error_code, int) { stop(); });
  }
  im.do_accept();
  for (std::size_t i = 0; i < im.options.threads; ++i) im.threads.emplace_back([&im] { im.ioc.run(); });
  return im.acceptor.local_endpoint().port();
}

void WsServer::wait() {
  for (auto& t : impl_->threads)
    if (t.joinable()) t.join();
  impl_->threads.clear();
}

void WsServer::stop() {
  net::post(impl_->ioc, [im = impl_.get()] {
    beast::error_code ec;
    im->acceptor.close(ec);
    if (im->signals) im->signals->cancel(ec);
  });
  impl_->ioc.stop();
}

}  // namespace sgr
