#pragma once

// Multi-layer 1 m grid map written by the realtime plotter. Each cell holds
// (x_loc, y_loc, value) of the last write, or NaN in all three fields.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "terrafuse/errors.hpp"
#include "terrafuse/world.hpp"

namespace terrafuse {

/// Layer identifiers as stored in the binary header. `heading` is reserved.
enum class LayerKind : std::uint8_t { resistance = 0, grade = 1, heading = 2 };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::resistance: return "resistance";
    case LayerKind::grade: return "grade";
    case LayerKind::heading: return "heading";
  }
  return "?";
}

struct CellRecord {
  double x_loc = std::numeric_limits<double>::quiet_NaN();
  double y_loc = std::numeric_limits<double>::quiet_NaN();
  double value = std::numeric_limits<double>::quiet_NaN();

  bool known() const { return !std::isnan(value); }
};

struct CellIndex {
  std::size_t i = 0;  // along x
  std::size_t j = 0;  // along y

  bool operator==(const CellIndex&) const = default;
};

struct MapLayer {
  LayerKind kind = LayerKind::resistance;
  std::vector<CellRecord> cells;  // row-major: index = j * m + i
};

class MultiLayerGridMap {
 public:
  MultiLayerGridMap(double origin_x, double origin_y, std::size_t m, std::size_t n, double resolution = 1.0,
                    std::vector<LayerKind> layers = {LayerKind::resistance, LayerKind::grade})
      : origin_x_(origin_x), origin_y_(origin_y), m_(m), n_(n), resolution_(resolution) {
    if (m == 0 || n == 0) throw InvalidArgument("grid map needs at least one cell in each direction");
    if (!(resolution > 0.0)) throw InvalidArgument("grid resolution must be positive");
    for (auto k : layers) layers_.push_back({k, std::vector<CellRecord>(m * n)});
  }

  /// Map covering `extent` at `resolution`.
  static MultiLayerGridMap covering(const Rect& extent, double resolution = 1.0) {
    const auto m = static_cast<std::size_t>(std::ceil(extent.width() / resolution - 1e-9));
    const auto n = static_cast<std::size_t>(std::ceil(extent.height() / resolution - 1e-9));
    return {extent.min_x, extent.min_y, m, n, resolution};
  }

  double origin_x() const { return origin_x_; }
  double origin_y() const { return origin_y_; }
  std::size_t m() const { return m_; }
  std::size_t n() const { return n_; }
  double resolution() const { return resolution_; }
  std::uint64_t skipped() const { return skipped_; }
  void set_skipped(std::uint64_t s) { skipped_ = s; }

  const std::vector<MapLayer>& layers() const { return layers_; }
  std::vector<MapLayer>& layers() { return layers_; }

  const MapLayer* layer(LayerKind k) const {
    for (const auto& l : layers_)
      if (l.kind == k) return &l;
    return nullptr;
  }
  MapLayer* layer(LayerKind k) {
    for (auto& l : layers_)
      if (l.kind == k) return &l;
    return nullptr;
  }

  const CellRecord& cell(const MapLayer& l, CellIndex c) const { return l.cells[c.j * m_ + c.i]; }
  CellRecord& cell(MapLayer& l, CellIndex c) { return l.cells[c.j * m_ + c.i]; }

  Eigen::Vector2d cell_center(CellIndex c) const {
    return {origin_x_ + (static_cast<double>(c.i) + 0.5) * resolution_,
            origin_y_ + (static_cast<double>(c.j) + 0.5) * resolution_};
  }

  /// Copy holding only the requested layer.
  MultiLayerGridMap only(LayerKind k) const {
    MultiLayerGridMap out(origin_x_, origin_y_, m_, n_, resolution_, {});
    if (const auto* l = layer(k)) out.layers_.push_back(*l);
    out.skipped_ = skipped_;
    return out;
  }

  bool operator==(const MultiLayerGridMap& o) const;

 private:
  double origin_x_, origin_y_;
  std::size_t m_, n_;
  double resolution_;
  std::vector<MapLayer> layers_;
  std::uint64_t skipped_ = 0;
};

namespace detail {
inline bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }
}  // namespace detail

/// Bitwise equality, so NaN markers compare equal to themselves.
inline bool MultiLayerGridMap::operator==(const MultiLayerGridMap& o) const {
  if (!detail::same_bits(origin_x_, o.origin_x_) || !detail::same_bits(origin_y_, o.origin_y_) || m_ != o.m_ ||
      n_ != o.n_ || !detail::same_bits(resolution_, o.resolution_) || skipped_ != o.skipped_ ||
      layers_.size() != o.layers_.size())
    return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].kind != o.layers_[l].kind) return false;
    for (std::size_t c = 0; c < layers_[l].cells.size(); ++c) {
      const auto& a = layers_[l].cells[c];
      const auto& b = o.layers_[l].cells[c];
      if (!detail::same_bits(a.x_loc, b.x_loc) || !detail::same_bits(a.y_loc, b.y_loc) ||
          !detail::same_bits(a.value, b.value))
        return false;
    }
  }
  return true;
}

/// Half-open cells: [i, i+1) x [j, j+1) in resolution units.
inline std::optional<CellIndex> try_cell_index(const MultiLayerGridMap& map, double x, double y) {
  if (!std::isfinite(x) || !std::isfinite(y)) return std::nullopt;
  const double fx = std::floor((x - map.origin_x()) / map.resolution());
  const double fy = std::floor((y - map.origin_y()) / map.resolution());
  if (fx < 0.0 || fy < 0.0 || fx >= static_cast<double>(map.m()) || fy >= static_cast<double>(map.n()))
    return std::nullopt;
  return CellIndex{static_cast<std::size_t>(fx), static_cast<std::size_t>(fy)};
}

inline CellIndex cell_index(const MultiLayerGridMap& map, double x, double y) {
  if (auto c = try_cell_index(map, x, y)) return *c;
  throw OutOfMap("point (" + std::to_string(x) + ", " + std::to_string(y) + ") lies outside the grid map");
}

/// Writes both terrain layers at the cell under (x, y), last write wins.
/// Out-of-map poses are counted and skipped. Returns whether a write happened.
inline bool record_cell(MultiLayerGridMap& map, double x, double y, double resistance, double grade) {
  const auto c = try_cell_index(map, x, y);
  if (!c) {
    map.set_skipped(map.skipped() + 1);
    return false;
  }
  if (auto* l = map.layer(LayerKind::resistance)) map.cell(*l, *c) = {x, y, resistance};
  if (auto* l = map.layer(LayerKind::grade)) map.cell(*l, *c) = {x, y, grade};
  return true;
}

struct PlanarSample {
  double t = 0.0, x = 0.0, y = 0.0;
};

/// Samples terrain at the true position and writes it at the estimated
/// position's cell, step by step. Trajectories must share one time grid.
inline void run_plotter(const std::vector<PlanarSample>& truth, const std::vector<PlanarSample>& estimate,
                        const GroundTruthMap& ground, MultiLayerGridMap& map) {
  if (truth.size() != estimate.size()) throw InvalidArgument("run_plotter: trajectories are not time-aligned");
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const GroundSample g = ground.sample(truth[k].x, truth[k].y);
    record_cell(map, estimate[k].x, estimate[k].y, g.resistance, g.slope_deg);
  }
}

// ---------------------------------------------------------------------------
// Binary format (little-endian):
//   "TFGM" | u16 version | u16 layer_count | u8 layer_kind[layer_count]
//   | u32 m | u32 n | f64 resolution | f64 origin_x | f64 origin_y | u64 skipped
//   | per layer: n rows of m cells, each cell f64 x_loc, f64 y_loc, f64 value

inline constexpr char kMapMagic[4] = {'T', 'F', 'G', 'M'};
inline constexpr std::uint16_t kMapVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out_.append(b, sizeof(T));
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}

  template <typename T>
  T get(const char* what) {
    if (pos_ + sizeof(T) > in_.size()) throw ParseError(std::string("truncated stream reading ") + what, pos_);
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view raw(std::size_t n, const char* what) {
    if (pos_ + n > in_.size()) throw ParseError(std::string("truncated stream reading ") + what, pos_);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_map(const MultiLayerGridMap& map) {
  detail::ByteWriter w;
  w.raw(kMapMagic, 4);
  w.put<std::uint16_t>(kMapVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(map.layers().size()));
  for (const auto& l : map.layers()) w.put<std::uint8_t>(static_cast<std::uint8_t>(l.kind));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(map.m()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(map.n()));
  w.put<double>(map.resolution());
  w.put<double>(map.origin_x());
  w.put<double>(map.origin_y());
  w.put<std::uint64_t>(map.skipped());
  for (const auto& l : map.layers()) {
    for (const auto& c : l.cells) {
      w.put<double>(c.x_loc);
      w.put<double>(c.y_loc);
      w.put<double>(c.value);
    }
  }
  return w.take();
}

inline MultiLayerGridMap deserialize_map(std::string_view bytes) {
  detail::ByteReader r(bytes);
  const auto magic = r.raw(4, "magic");
  if (magic != std::string_view(kMapMagic, 4)) throw ParseError("bad grid map magic", 0);
  const std::size_t version_at = r.pos();
  const auto version = r.get<std::uint16_t>("version");
  if (version != kMapVersion) throw ParseError("unsupported grid map version " + std::to_string(version), version_at);
  const auto count = r.get<std::uint16_t>("layer count");
  std::vector<LayerKind> kinds;
  for (std::uint16_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    const auto k = r.get<std::uint8_t>("layer kind");
    if (k > static_cast<std::uint8_t>(LayerKind::heading)) throw ParseError("unknown layer kind", at);
    kinds.push_back(static_cast<LayerKind>(k));
  }
  const std::size_t dims_at = r.pos();
  const auto m = r.get<std::uint32_t>("m");
  const auto n = r.get<std::uint32_t>("n");
  const auto res = r.get<double>("resolution");
  const auto ox = r.get<double>("origin_x");
  const auto oy = r.get<double>("origin_y");
  const auto skipped = r.get<std::uint64_t>("skip counter");
  if (m == 0 || n == 0 || !(res > 0.0)) throw ParseError("invalid grid dimensions", dims_at);
  const std::size_t need = static_cast<std::size_t>(count) * m * n * 3 * sizeof(double);
  if (bytes.size() - r.pos() < need) throw ParseError("truncated cell data", bytes.size());

  MultiLayerGridMap map(ox, oy, m, n, res, kinds);
  map.set_skipped(skipped);
  for (auto& l : map.layers()) {
    for (auto& c : l.cells) {
      c.x_loc = r.get<double>("cell");
      c.y_loc = r.get<double>("cell");
      c.value = r.get<double>("cell");
    }
  }
  if (!r.done()) throw ParseError("trailing bytes after grid map", r.pos());
  return map;
}

namespace detail {
inline std::string format_value(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}
}  // namespace detail

/// n rows x m columns, row j = 0 first, "NaN" for unknown cells.
inline std::string layer_to_csv(const MultiLayerGridMap& map, LayerKind k) {
  const auto* l = map.layer(k);
  if (!l) throw InvalidArgument(std::string("map has no ") + to_string(k) + " layer");
  std::string out;
  for (std::size_t j = 0; j < map.n(); ++j) {
    for (std::size_t i = 0; i < map.m(); ++i) {
      if (i) out += ',';
      out += detail::format_value(l->cells[j * map.m() + i].value);
    }
    out += '\n';
  }
  return out;
}

/// Binary PGM with the top image row at the largest y.
inline std::string gray_to_pgm(std::size_t m, std::size_t n, const std::vector<std::uint8_t>& px) {
  std::string out = "P5\n" + std::to_string(m) + " " + std::to_string(n) + "\n255\n";
  for (std::size_t row = 0; row < n; ++row) {
    const std::size_t j = n - 1 - row;
    out.append(reinterpret_cast<const char*>(px.data() + j * m), m);
  }
  return out;
}

/// Known cells scaled min..max onto 1..255 (255 when constant); unknown = 0.
inline std::string layer_to_pgm(const MultiLayerGridMap& map, LayerKind k) {
  const auto* l = map.layer(k);
  if (!l) throw InvalidArgument(std::string("map has no ") + to_string(k) + " layer");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& c : l->cells) {
    if (!c.known()) continue;
    lo = std::min(lo, c.value);
    hi = std::max(hi, c.value);
  }
  std::vector<std::uint8_t> px(l->cells.size(), 0);
  for (std::size_t i = 0; i < px.size(); ++i) {
    const auto& c = l->cells[i];
    if (!c.known()) continue;
    px[i] = hi > lo ? static_cast<std::uint8_t>(1.0 + std::round(254.0 * (c.value - lo) / (hi - lo))) : 255;
  }
  return gray_to_pgm(map.m(), map.n(), px);
}

}  // namespace terrafuse
