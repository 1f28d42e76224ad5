#pragma once

#include <functional>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "atlas/net/pcap.hpp"
#include "atlas/util/clock.hpp"

namespace atlas::net {

struct CapturedPacket {
  std::uint64_t id = 0;
  std::string tag;  // empty when no flow owns the packet
  PacketMeta meta;
  Bytes payload;
  WallTime wall{};
};

// In-process stand-in for a network namespace: every scenario socket is a
// Flow opened on the interface, each packet carries its flow's tag, and the
// interface captures everything that crosses it.
class VirtualInterface {
 public:
  using Sink = std::function<void(const CapturedPacket&)>;

  class Flow {
   public:
    // Splits `payload` into packets of at most `mtu` bytes.
    void send(ByteView payload);
    const std::string& tag() const { return tag_; }
    const PacketMeta& meta() const { return meta_; }
    std::size_t bytes_sent() const { return bytes_; }

   private:
    friend class VirtualInterface;
    Flow(VirtualInterface* vif, std::string tag, PacketMeta meta) : vif_(vif), tag_(std::move(tag)), meta_(std::move(meta)) {}
    VirtualInterface* vif_;
    std::string tag_;
    PacketMeta meta_;
    std::size_t bytes_ = 0;
  };

  VirtualInterface(std::string name, Clock& clock, std::size_t mtu = 1400);

  const std::string& name() const { return name_; }
  void set_sink(Sink sink);
  Flow open_flow(const std::string& tag, PacketMeta meta);
  // Traffic that reaches the interface without a flow (what a leaky
  // namespace would let through). Captured and counted as a breach.
  void inject_unattributed(const PacketMeta& meta, ByteView payload);

  std::vector<CapturedPacket> capture() const;
  std::size_t emitted() const;
  std::size_t unattributed() const;
  Bytes capture_pcap() const;
  // Throws Error(IsolationBreach) unless captured packets and flow-emitted
  // packets are the same set and every packet carries a registered tag.
  void verify_isolation() const;

 private:
  void deliver(const std::string& tag, const PacketMeta& meta, ByteView payload, bool attributed);

  std::string name_;
  Clock& clock_;
  std::size_t mtu_;
  mutable std::mutex mu_;
  Sink sink_;
  std::set<std::string> tags_;
  std::set<std::uint64_t> emitted_ids_;
  std::vector<CapturedPacket> captured_;
  std::uint64_t next_id_ = 1;
};

}  // namespace atlas::net
