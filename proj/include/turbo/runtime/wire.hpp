#pragma once

#include <cstdint>
#include <cstring>
#include <optional>
#include <vector>

namespace turbo::runtime {

// Envelope message types. 0xFF is the reserved error response for requests
// naming an unknown config.
enum class MsgType : uint8_t {
  Request = 1,
  Response = 2,
  Probe = 3,
  ProbeAck = 4,
  Error = 0xFF,
};

// Fixed wire header, big-endian:
//   msg_type:1  service_id:2  frame_id:8  config_id:2
//   deadline_unix_micros:8  payload_len:4
// deadline_unix_micros is informational only: requests carry the client's
// deadline, responses carry the server's completion time (for the
// t_server_done log column); the server never acts on it.
inline constexpr size_t kHeaderBytes = 25;
inline constexpr uint32_t kMaxPayloadBytes = 1u << 28;

struct OffloadEnvelope {
  MsgType msg_type = MsgType::Request;
  uint16_t service_id = 0;
  uint64_t frame_id = 0;
  uint16_t config_id = 0;
  uint64_t deadline_unix_micros = 0;
  std::vector<uint8_t> payload;
};

namespace detail {

inline void put_u16(uint8_t* p, uint16_t v) {
  p[0] = static_cast<uint8_t>(v >> 8);
  p[1] = static_cast<uint8_t>(v);
}

inline void put_u32(uint8_t* p, uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<uint8_t>(v >> (24 - 8 * i));
}

inline void put_u64(uint8_t* p, uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<uint8_t>(v >> (56 - 8 * i));
}

inline uint16_t get_u16(const uint8_t* p) {
  return static_cast<uint16_t>((static_cast<uint16_t>(p[0]) << 8) | p[1]);
}

inline uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | p[i];
  return v;
}

inline uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | p[i];
  return v;
}

}  // namespace detail

inline void encode_header(const OffloadEnvelope& env, uint8_t* out) {
  out[0] = static_cast<uint8_t>(env.msg_type);
  detail::put_u16(out + 1, env.service_id);
  detail::put_u64(out + 3, env.frame_id);
  detail::put_u16(out + 11, env.config_id);
  detail::put_u64(out + 13, env.deadline_unix_micros);
  detail::put_u32(out + 21, static_cast<uint32_t>(env.payload.size()));
}

inline std::vector<uint8_t> encode(const OffloadEnvelope& env) {
  std::vector<uint8_t> bytes(kHeaderBytes + env.payload.size());
  encode_header(env, bytes.data());
  if (!env.payload.empty())
    std::memcpy(bytes.data() + kHeaderBytes, env.payload.data(), env.payload.size());
  return bytes;
}

struct EnvelopeHeader {
  MsgType msg_type;
  uint16_t service_id;
  uint64_t frame_id;
  uint16_t config_id;
  uint64_t deadline_unix_micros;
  uint32_t payload_len;
};

// Absent when the header is malformed (unknown type or oversized payload).
inline std::optional<EnvelopeHeader> decode_header(const uint8_t* p) {
  EnvelopeHeader h{};
  switch (p[0]) {
    case 1: h.msg_type = MsgType::Request; break;
    case 2: h.msg_type = MsgType::Response; break;
    case 3: h.msg_type = MsgType::Probe; break;
    case 4: h.msg_type = MsgType::ProbeAck; break;
    case 0xFF: h.msg_type = MsgType::Error; break;
    default: return std::nullopt;
  }
  h.service_id = detail::get_u16(p + 1);
  h.frame_id = detail::get_u64(p + 3);
  h.config_id = detail::get_u16(p + 11);
  h.deadline_unix_micros = detail::get_u64(p + 13);
  h.payload_len = detail::get_u32(p + 21);
  if (h.payload_len > kMaxPayloadBytes) return std::nullopt;
  return h;
}

}  // namespace turbo::runtime
