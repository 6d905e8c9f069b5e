#pragma once

// Self-contained sensor recording. Replaying it reproduces a run without
// re-simulating: it carries the scenario text, the device table, every
// reading and the truth trajectory.
//
// Layout (little-endian):
//   "TFSR" | u16 version | u64 seed | f64 truth_dt
//   | u32 config_len | config bytes
//   | u16 device_count | per device: u16 id, u8 kind, u16 name_len, name, f64 lever_arm[3]
//   | frames until end of stream
// Frame: u32 body_len | u16 device_id | f64 t | payload
//   sensor payload: u8 cov_form | f64 value[dim] | covariance
//     cov_form 0: f64 diagonal[dim] (off-diagonal entries exactly zero)
//     cov_form 1: f64 row-major[dim * dim]
//   truth payload (device 0xFFFF): x y z roll pitch yaw vx vy vz wx wy wz ax ay az

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "terrafuse/errors.hpp"
#include "terrafuse/gridmap.hpp"
#include "terrafuse/sensors.hpp"
#include "terrafuse/world.hpp"

namespace terrafuse {

inline constexpr char kRecordingMagic[4] = {'T', 'F', 'S', 'R'};
inline constexpr std::uint16_t kRecordingVersion = 1;
inline constexpr std::uint16_t kTruthDeviceId = 0xFFFF;
inline constexpr int kTruthPayload = 15;

struct RecordedDevice {
  std::uint16_t id = 0;
  SensorKind kind = SensorKind::gps_position;
  std::string name;
  Eigen::Vector3d lever_arm = Eigen::Vector3d::Zero();
};

struct Recording {
  std::uint64_t seed = 0;
  double truth_dt = 0.01;
  std::string config_text;
  std::vector<RecordedDevice> devices;
  std::vector<VehicleState> truth;
  std::vector<std::vector<SensorReading>> streams;  // parallel to `devices`

  const RecordedDevice* device(const std::string& name) const {
    for (const auto& d : devices)
      if (d.name == name) return &d;
    return nullptr;
  }

  const std::vector<SensorReading>* stream(std::uint16_t id) const {
    for (std::size_t i = 0; i < devices.size(); ++i)
      if (devices[i].id == id) return &streams[i];
    return nullptr;
  }
};

/// Frames are written device by device; readers must not assume global time order.
inline std::string encode_recording(const Recording& rec) {
  if (rec.streams.size() != rec.devices.size()) throw InvalidArgument("encode_recording: stream/device count mismatch");
  detail::ByteWriter w;
  w.raw(kRecordingMagic, 4);
  w.put<std::uint16_t>(kRecordingVersion);
  w.put<std::uint64_t>(rec.seed);
  w.put<double>(rec.truth_dt);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(rec.config_text.size()));
  w.raw(rec.config_text.data(), rec.config_text.size());
  w.put<std::uint16_t>(static_cast<std::uint16_t>(rec.devices.size()));
  for (const auto& d : rec.devices) {
    if (d.id == kTruthDeviceId) throw InvalidArgument("encode_recording: device id 0xFFFF is reserved");
    w.put<std::uint16_t>(d.id);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(d.kind));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(d.name.size()));
    w.raw(d.name.data(), d.name.size());
    for (int i = 0; i < 3; ++i) w.put<double>(d.lever_arm[i]);
  }

  auto frame = [&](std::uint16_t id, double t, std::size_t payload_bytes) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(sizeof(std::uint16_t) + sizeof(double) + payload_bytes));
    w.put<std::uint16_t>(id);
    w.put<double>(t);
  };
  for (const auto& s : rec.truth) {
    frame(kTruthDeviceId, s.t, sizeof(double) * kTruthPayload);
    for (double v : {s.pose.x, s.pose.y, s.pose.z, s.pose.roll, s.pose.pitch, s.pose.yaw}) w.put<double>(v);
    for (const auto* vec : {&s.v, &s.w, &s.a})
      for (int i = 0; i < 3; ++i) w.put<double>((*vec)[i]);
  }
  for (std::size_t k = 0; k < rec.devices.size(); ++k) {
    const int dim = measurement_dim(rec.devices[k].kind);
    for (const auto& r : rec.streams[k]) {
      if (r.value.size() != dim || r.noise_cov.rows() != dim || r.noise_cov.cols() != dim)
        throw InvalidArgument("encode_recording: reading shape does not match its device kind");
      const bool diagonal = r.noise_cov.isDiagonal(0.0);
      const auto ncov = static_cast<std::size_t>(diagonal ? dim : dim * dim);
      frame(r.device_id, r.t, 1 + sizeof(double) * (static_cast<std::size_t>(dim) + ncov));
      w.put<std::uint8_t>(diagonal ? 0 : 1);
      for (int i = 0; i < dim; ++i) w.put<double>(r.value[i]);
      if (diagonal) {
        for (int i = 0; i < dim; ++i) w.put<double>(r.noise_cov(i, i));
      } else {
        for (int i = 0; i < dim; ++i)
          for (int j = 0; j < dim; ++j) w.put<double>(r.noise_cov(i, j));
      }
    }
  }
  return w.take();
}

inline Recording decode_recording(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (r.raw(4, "magic") != std::string_view(kRecordingMagic, 4)) throw ParseError("not a sensor recording", 0);
  const auto version = r.get<std::uint16_t>("version");
  if (version != kRecordingVersion)
    throw IncompatibleRecording("recording version " + std::to_string(version) + " is not supported (expected " +
                                std::to_string(kRecordingVersion) + ")");
  Recording rec;
  rec.seed = r.get<std::uint64_t>("seed");
  rec.truth_dt = r.get<double>("truth_dt");
  const auto cfg_len = r.get<std::uint32_t>("config length");
  rec.config_text = std::string(r.raw(cfg_len, "config text"));
  const auto count = r.get<std::uint16_t>("device count");
  std::map<std::uint16_t, std::size_t> slot;
  for (std::uint16_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    RecordedDevice d;
    d.id = r.get<std::uint16_t>("device id");
    const auto kind = r.get<std::uint8_t>("device kind");
    if (kind > static_cast<std::uint8_t>(SensorKind::encoder_velocity)) throw ParseError("unknown sensor kind", at);
    d.kind = static_cast<SensorKind>(kind);
    const auto name_len = r.get<std::uint16_t>("name length");
    d.name = std::string(r.raw(name_len, "device name"));
    for (int k = 0; k < 3; ++k) d.lever_arm[k] = r.get<double>("lever arm");
    if (d.id == kTruthDeviceId || !slot.emplace(d.id, rec.devices.size()).second)
      throw ParseError("duplicate or reserved device id", at);
    rec.devices.push_back(std::move(d));
  }
  rec.streams.resize(rec.devices.size());

  while (!r.done()) {
    const std::size_t at = r.pos();
    const auto len = r.get<std::uint32_t>("frame length");
    const std::size_t body_start = r.pos();
    const auto id = r.get<std::uint16_t>("frame device");
    const double t = r.get<double>("frame time");
    if (id == kTruthDeviceId) {
      if (len != sizeof(std::uint16_t) + sizeof(double) * (1 + kTruthPayload))
        throw ParseError("truth frame has the wrong length", at);
      VehicleState s;
      s.t = t;
      s.pose.x = r.get<double>("truth");
      s.pose.y = r.get<double>("truth");
      s.pose.z = r.get<double>("truth");
      s.pose.roll = r.get<double>("truth");
      s.pose.pitch = r.get<double>("truth");
      s.pose.yaw = r.get<double>("truth");
      for (auto* vec : {&s.v, &s.w, &s.a})
        for (int i = 0; i < 3; ++i) (*vec)[i] = r.get<double>("truth");
      rec.truth.push_back(s);
      continue;
    }
    const auto it = slot.find(id);
    if (it == slot.end()) throw ParseError("frame references unknown device " + std::to_string(id), at);
    const auto& dev = rec.devices[it->second];
    const int dim = measurement_dim(dev.kind);
    const std::size_t form_at = r.pos();
    const auto form = r.get<std::uint8_t>("covariance form");
    if (form > 1) throw ParseError("unknown covariance form", form_at);
    const int ncov = form == 0 ? dim : dim * dim;
    if (len != sizeof(std::uint16_t) + sizeof(double) + 1 + sizeof(double) * static_cast<std::size_t>(dim + ncov))
      throw ParseError("frame length does not match the device kind", at);
    SensorReading s;
    s.device_id = id;
    s.t = t;
    s.kind = dev.kind;
    s.mount_offset = dev.lever_arm;
    s.value.resize(dim);
    s.noise_cov = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) s.value[i] = r.get<double>("reading value");
    if (form == 0) {
      for (int i = 0; i < dim; ++i) s.noise_cov(i, i) = r.get<double>("reading covariance");
    } else {
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) s.noise_cov(i, j) = r.get<double>("reading covariance");
    }
    if (r.pos() - body_start != len) throw ParseError("frame length mismatch", at);
    rec.streams[it->second].push_back(std::move(s));
  }
  return rec;
}

}  // namespace terrafuse
