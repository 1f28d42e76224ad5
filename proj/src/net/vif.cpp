#include "atlas/net/vif.hpp"

#include "atlas/util/error.hpp"

namespace atlas::net {

VirtualInterface::VirtualInterface(std::string name, Clock& clock, std::size_t mtu)
    : name_(std::move(name)), clock_(clock), mtu_(mtu) {}

void VirtualInterface::set_sink(Sink sink) {
  std::lock_guard lock(mu_);
  sink_ = std::move(sink);
}

VirtualInterface::Flow VirtualInterface::open_flow(const std::string& tag, PacketMeta meta) {
  if (tag.empty()) throw Error(Errc::PreconditionFailed, "flows need a non-empty tag");
  std::lock_guard lock(mu_);
  tags_.insert(tag);
  return Flow(this, tag, std::move(meta));
}

void VirtualInterface::Flow::send(ByteView payload) {
  std::size_t pos = 0;
  do {
    std::size_t n = std::min(vif_->mtu_, payload.size() - pos);
    vif_->deliver(tag_, meta_, payload.subspan(pos, n), true);
    pos += n;
  } while (pos < payload.size());
  bytes_ += payload.size();
}

void VirtualInterface::inject_unattributed(const PacketMeta& meta, ByteView payload) {
  deliver("", meta, payload, false);
}

void VirtualInterface::deliver(const std::string& tag, const PacketMeta& meta, ByteView payload, bool attributed) {
  CapturedPacket p;
  Sink sink;
  {
    std::lock_guard lock(mu_);
    p.id = next_id_++;
    p.tag = tag;
    p.meta = meta;
    p.payload.assign(payload.begin(), payload.end());
    p.wall = clock_.wall();
    if (attributed) emitted_ids_.insert(p.id);
    captured_.push_back(p);
    sink = sink_;
  }
  if (sink) sink(p);
}

std::vector<CapturedPacket> VirtualInterface::capture() const {
  std::lock_guard lock(mu_);
  return captured_;
}

std::size_t VirtualInterface::emitted() const {
  std::lock_guard lock(mu_);
  return emitted_ids_.size();
}

std::size_t VirtualInterface::unattributed() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& p : captured_) n += p.tag.empty() || !tags_.count(p.tag);
  return n;
}

Bytes VirtualInterface::capture_pcap() const {
  std::lock_guard lock(mu_);
  PcapWriter w;
  for (const auto& p : captured_) w.add(p.wall, build_frame(p.meta, p.payload));
  return w.bytes();
}

void VirtualInterface::verify_isolation() const {
  std::lock_guard lock(mu_);
  std::set<std::uint64_t> captured_ids;
  for (const auto& p : captured_) {
    if (p.tag.empty() || !tags_.count(p.tag)) {
      throw Error(Errc::IsolationBreach, "unattributed packet #" + std::to_string(p.id) + " on " + name_ + " (" +
                                             p.meta.src + " -> " + p.meta.dst + ")");
    }
    captured_ids.insert(p.id);
  }
  if (captured_ids != emitted_ids_) {
    throw Error(Errc::IsolationBreach, "capture and emitted packet sets differ on " + name_);
  }
}

}  // namespace atlas::net
