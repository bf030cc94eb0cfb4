#include "sot/gateway/ws_server.hpp"

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <deque>
#include <fstream>
#include <sstream>
#include <thread>

namespace sot::gateway {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using session::Millis;

std::pair<std::string, unsigned short> parse_bind(const std::string& bind, unsigned short default_port) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) return {bind, default_port};
  const auto port_text = bind.substr(colon + 1);
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(port_text, &used);
    if (used != port_text.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw Error(ErrorCode::validation_error, "bad port in bind address '" + bind + "'");
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::validation_error, "port out of range in '" + bind + "'");
  return {bind.substr(0, colon), static_cast<unsigned short>(port)};
}

struct WebSocketServer::Impl {
  Impl(Gateway& g, ServerOptions o) : gateway(g), options(std::move(o)), acceptor(ioc), timer(ioc), started(std::chrono::steady_clock::now()) {
    const auto address = net::ip::make_address(options.address);
    tcp::endpoint endpoint(address, options.port);
    acceptor.open(endpoint.protocol());
    acceptor.set_option(net::socket_base::reuse_address(true));
    acceptor.bind(endpoint);
    acceptor.listen(net::socket_base::max_listen_connections);
  }

  Millis now() const {
    return std::chrono::duration_cast<Millis>(std::chrono::steady_clock::now() - started);
  }

  void accept();
  void schedule_tick();

  Gateway& gateway;
  ServerOptions options;
  net::io_context ioc;
  tcp::acceptor acceptor;
  net::steady_timer timer;
  std::chrono::steady_clock::time_point started;
};

namespace {

class WsConnection : public ClientLink, public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket&& socket, WebSocketServer::Impl& server) : ws_(std::move(socket)), server_(server) {}

  void start(http::request<http::string_body> request) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(request, beast::bind_front_handler(&WsConnection::on_accept, shared_from_this()));
  }

  void send(const std::string& text) override {
    net::post(ws_.get_executor(), [self = shared_from_this(), text] {
      self->queue_.push_back(text);
      if (self->queue_.size() == 1) self->write_next();
    });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (!ec) read();
  }

  void read() { ws_.async_read(buffer_, beast::bind_front_handler(&WsConnection::on_read, shared_from_this())); }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      server_.gateway.disconnect(this, server_.now());
      return;
    }
    const auto text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    server_.gateway.handle(shared_from_this(), text, server_.now());
    read();
  }

  void write_next() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), beast::bind_front_handler(&WsConnection::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      queue_.clear();
      return;
    }
    queue_.pop_front();
    if (!queue_.empty()) write_next();
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  WebSocketServer::Impl& server_;
};

const char* mime_type(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".html") return "text/html";
  if (ext == ".js") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket&& socket, WebSocketServer::Impl& server) : stream_(std::move(socket)), server_(server) {}

  void start() {
    net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpConnection::read, shared_from_this()));
  }

 private:
  void read() {
    request_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, request_, beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return;
    if (websocket::is_upgrade(request_)) {
      stream_.expires_never();
      std::make_shared<WsConnection>(stream_.release_socket(), server_)->start(std::move(request_));
      return;
    }
    respond();
  }

  void respond() {
    auto response = std::make_shared<http::response<http::string_body>>();
    response->version(request_.version());
    response->keep_alive(false);
    const std::string target(request_.target());
    if (request_.method() != http::verb::get) {
      response->result(http::status::method_not_allowed);
    } else if (target == "/health") {
      response->result(http::status::ok);
      response->set(http::field::content_type, "application/json");
      response->body() = nlohmann::json{{"ok", true}, {"protocol", kProtocolVersion}}.dump();
    } else if (auto file = static_file(target)) {
      std::ifstream in(*file, std::ios::binary);
      std::ostringstream body;
      body << in.rdbuf();
      response->result(http::status::ok);
      response->set(http::field::content_type, mime_type(*file));
      response->body() = body.str();
    } else {
      response->result(http::status::not_found);
      response->body() = "not found";
    }
    response->prepare_payload();
    http::async_write(stream_, *response, [self = shared_from_this(), response](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  std::optional<std::filesystem::path> static_file(std::string target) const {
    if (server_.options.static_dir.empty()) return std::nullopt;
    target = target.substr(0, target.find('?'));
    if (target.empty() || target.front() != '/' || target.find("..") != std::string::npos) return std::nullopt;
    auto path = server_.options.static_dir / target.substr(1);
    if (target == "/") path = server_.options.static_dir / "index.html";
    if (!std::filesystem::is_regular_file(path)) return std::nullopt;
    return path;
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
  WebSocketServer::Impl& server_;
};

}  // namespace

void WebSocketServer::Impl::accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<HttpConnection>(std::move(socket), *this)->start();
    accept();
  });
}

void WebSocketServer::Impl::schedule_tick() {
  timer.expires_after(options.tick_interval);
  timer.async_wait([this](beast::error_code ec) {
    if (ec) return;
    gateway.tick(now());
    schedule_tick();
  });
}

WebSocketServer::WebSocketServer(Gateway& gateway, ServerOptions options)
    : impl_(std::make_unique<Impl>(gateway, std::move(options))) {}

WebSocketServer::~WebSocketServer() = default;

unsigned short WebSocketServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void WebSocketServer::run() {
  impl_->accept();
  impl_->schedule_tick();
  std::vector<std::thread> extra;
  for (int i = 1; i < impl_->options.threads; ++i) extra.emplace_back([this] { impl_->ioc.run(); });
  impl_->ioc.run();
  for (auto& t : extra) t.join();
}

void WebSocketServer::stop() {
  net::post(impl_->ioc, [this] {
    beast::error_code ignored;
    impl_->acceptor.close(ignored);
    impl_->timer.cancel();
    impl_->ioc.stop();
  });
}

}  // namespace sot::gateway
