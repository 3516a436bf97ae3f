// Three-node example: a LAN node, a center node with one LAN and two WAN
// channels, and a remote node at the far end of the WAN.
//
// The center receives a message from the LAN, exchanges it with the remote
// over both WAN channels, and sends what the remote returned back to the LAN.
//
//   fig1_example --role lan    --center-host H --lan-port P0
//   fig1_example --role center --remote-host H --lan-port P0 --wan-ports P1,P2
//   fig1_example --role remote --wan-ports P1,P2

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpw/error.hpp"
#include "mpw/mpw.hpp"

namespace {

std::vector<std::byte> pattern(std::size_t n, unsigned mul, unsigned add) {
  std::vector<std::byte> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<std::byte>((i * mul + add) & 0xff);
  return out;
}

std::vector<std::byte> lan_payload(std::size_t n) { return pattern(n, 7, 1); }
std::vector<std::byte> remote_payload(std::size_t n) { return pattern(n, 13, 5); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-node LAN/WAN message passing example"};
  std::string role;
  std::string center_host = "127.0.0.1";
  std::string remote_host = "127.0.0.1";
  std::uint16_t lan_port = 6000;
  std::vector<std::uint16_t> wan_ports{6001, 6002};
  std::size_t msg_size = 100;
  double timeout_sec = 30.0;

  app.add_option("--role", role)->required()->check(CLI::IsMember({"lan", "center", "remote"}));
  app.add_option("--center-host", center_host);
  app.add_option("--remote-host", remote_host);
  app.add_option("--lan-port", lan_port);
  app.add_option("--wan-ports", wan_ports)->delimiter(',')->expected(2);
  app.add_option("--msg-size", msg_size);
  app.add_option("--timeout", timeout_sec)->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const auto timeout = std::chrono::milliseconds(static_cast<std::int64_t>(timeout_sec * 1000));
  auto dial = [&](const std::string& host, std::uint16_t port) {
    auto c = mpw::ChannelConfig::connect(host, port);
    c.connect_timeout = timeout;
    c.retry_backoff = std::chrono::milliseconds(50);
    return c;
  };
  auto listen = [&](std::uint16_t port) {
    auto c = mpw::ChannelConfig::accept(port);
    c.connect_timeout = timeout;
    return c;
  };

  try {
    if (role == "lan") {
      auto mpw = mpw::Mpw::init({dial(center_host, lan_port)});
      const mpw::Path lan{0};
      mpw.send(lan_payload(msg_size), lan);
      const auto reply = mpw.recv(msg_size, lan);
      mpw.finalize();
      if (reply != remote_payload(msg_size)) {
        std::fprintf(stderr, "lan: reply does not match the remote payload\n");
        return 1;
      }
      std::printf("lan: received %zu bytes from remote intact\n", reply.size());
    } else if (role == "center") {
      auto mpw = mpw::Mpw::init({listen(lan_port), dial(remote_host, wan_ports[0]),
                                 dial(remote_host, wan_ports[1])});
      const mpw::Path lan{0};
      const mpw::Path wan{1, 2};
      const auto send_buf = mpw.recv(msg_size, lan);
      const auto recv_buf = mpw.send_recv(send_buf, msg_size, wan);
      mpw.send(recv_buf, lan);
      mpw.finalize();
      std::printf("center: relayed %zu bytes each way\n", msg_size);
    } else {
      // The center numbers its WAN channels 1 and 2.
      auto first = listen(wan_ports[0]);
      first.link_index = 1;
      auto second = listen(wan_ports[1]);
      second.link_index = 2;
      auto mpw = mpw::Mpw::init({first, second});
      const auto got = mpw.send_recv(remote_payload(msg_size), msg_size, mpw::Path{0, 1});
      mpw.finalize();
      if (got != lan_payload(msg_size)) {
        std::fprintf(stderr, "remote: message does not match the LAN payload\n");
        return 1;
      }
      std::printf("remote: exchanged %zu bytes\n", msg_size);
    }
  } catch (const mpw::Error& e) {
    std::fprintf(stderr, "%s: %s\n", role.c_str(), e.what());
    return 1;
  }
  return 0;
}
