#pragma once

// HTTP + WebSocket front end over Service (Boost.Beast). One thread per
// connection; WebSocket clients on /sessions/{id}/events receive a status
// message every second and an extra message on each phase change.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "xrl/service.hpp"

namespace xrl {

class Server {
public:
  using tcp = boost::asio::ip::tcp;

  Server(Service& service, const std::string& address, unsigned short port)
      : service_(service), acceptor_(ioc_) {
    const tcp::endpoint ep(boost::asio::ip::make_address(address), port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(boost::asio::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
  }

  ~Server() { stop(); }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  /// stop() on SIGINT/SIGTERM.
  void stop_on_signals() {
    signals_ = std::make_unique<boost::asio::signal_set>(ioc_, SIGINT, SIGTERM);
    signals_->async_wait([this](const boost::system::error_code& ec, int) {
      if (!ec) stop();
    });
  }

  /// Accepts connections until stop().
  void run() {
    accept_next();
    ioc_.run();
    join_all();
  }

  void stop() {
    if (stopping_.exchange(true)) return;
    boost::asio::post(ioc_, [this] {
      boost::system::error_code ec;
      acceptor_.close(ec);
    });
    {
      std::lock_guard lock(conn_mutex_);
      for (auto& c : connections_) {
        boost::system::error_code ec;
        c->socket.shutdown(tcp::socket::shutdown_both, ec);
        c->socket.close(ec);
      }
    }
    ioc_.stop();
  }

private:
  struct Connection {
    explicit Connection(tcp::socket s) : socket(std::move(s)) {}
    tcp::socket socket;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_next() {
    acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (ec || stopping_) return;
      reap();
      auto conn = std::make_shared<Connection>(std::move(socket));
      {
        std::lock_guard lock(conn_mutex_);
        connections_.push_back(conn);
      }
      conn->thread = std::thread([this, conn] {
        try {
          serve(*conn);
        } catch (const std::exception&) {
        }
        conn->done = true;
      });
      accept_next();
    });
  }

  void reap() {
    std::lock_guard lock(conn_mutex_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      if ((*it)->done) {
        if ((*it)->thread.joinable()) (*it)->thread.join();
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
  }

  void join_all() {
    std::list<std::shared_ptr<Connection>> all;
    {
      std::lock_guard lock(conn_mutex_);
      for (auto& c : connections_) {
        boost::system::error_code ec;
        c->socket.shutdown(tcp::socket::shutdown_both, ec);
      }
      all.swap(connections_);
    }
    for (auto& c : all)
      if (c->thread.joinable()) c->thread.join();
  }

  void serve(Connection& conn) {
    namespace beast = boost::beast;
    namespace http = beast::http;
    beast::flat_buffer buffer;
    for (;;) {
      http::request<http::string_body> req;
      beast::error_code ec;
      http::read(conn.socket, buffer, req, ec);
      if (ec) return;

      const std::string target(req.target());
      if (beast::websocket::is_upgrade(req)) {
        const ParsedTarget t = parse_target(target);
        if (t.segments.size() == 3 && t.segments[0] == "sessions" && t.segments[2] == "events") {
          stream_events(conn.socket, req, t.segments[1]);
        } else {
          http::response<http::string_body> res{http::status::not_found, req.version()};
          res.set(http::field::content_type, "application/json");
          res.body() = R"({"error":"not_found","message":"no websocket route"})";
          res.prepare_payload();
          http::write(conn.socket, res, ec);
        }
        return;
      }

      const HttpResponse out =
          service_.handle({std::string(req.method_string()), target, req.body()});
      http::response<http::string_body> res{static_cast<http::status>(out.status), req.version()};
      res.set(http::field::server, "xrl");
      res.set(http::field::content_type, out.content_type);
      res.keep_alive(req.keep_alive());
      res.body() = out.body;
      res.prepare_payload();
      http::write(conn.socket, res, ec);
      if (ec || !res.keep_alive()) break;
    }
    beast::error_code ec;
    conn.socket.shutdown(tcp::socket::shutdown_send, ec);
  }

  void stream_events(tcp::socket& socket, const boost::beast::http::request<boost::beast::http::string_body>& req,
                     const std::string& id) {
    namespace websocket = boost::beast::websocket;
    websocket::stream<tcp::socket&> ws(socket);
    ws.accept(req);
    ws.text(true);
    std::string last_phase;
    while (!stopping_) {
      bool changed = false;
      auto status = service_.poll(id, &changed);
      if (!status) {
        ws.write(boost::asio::buffer(std::string(R"({"type":"error","error":"not_found"})")));
        break;
      }
      const std::string phase = status->value("phase", std::string("Complete"));
      if (changed || (!last_phase.empty() && phase != last_phase)) {
        nlohmann::json msg = *status;
        msg["type"] = "phase";
        ws.write(boost::asio::buffer(msg.dump()));
      }
      last_phase = phase;
      ws.write(boost::asio::buffer(status->dump()));
      if (status->value("type", "") == "complete") break;
      sleep_interruptible(std::chrono::seconds(1));
    }
    boost::beast::error_code ec;
    ws.close(websocket::close_code::normal, ec);
  }

  void sleep_interruptible(std::chrono::milliseconds d) {
    const auto until = std::chrono::steady_clock::now() + d;
    while (!stopping_ && std::chrono::steady_clock::now() < until)
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }

  Service& service_;
  boost::asio::io_context ioc_;
  tcp::acceptor acceptor_;
  std::unique_ptr<boost::asio::signal_set> signals_;
  std::atomic<bool> stopping_{false};
  std::mutex conn_mutex_;
  std::list<std::shared_ptr<Connection>> connections_;
};

}  // namespace xrl
