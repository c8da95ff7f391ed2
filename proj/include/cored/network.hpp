#pragma once

// Dense feed-forward binary classifier with teacher/student roles and a
// fixed little-endian binary checkpoint format ("CRDM").
//
// Contract: hidden layers use ReLU, the final layer (width 2) none. A
// Teacher is frozen: its parameters carry no gradients and optimiser steps
// against it fail hard. clone_as_student / promote_to_teacher convert
// between the roles via deep copies, so the two networks never alias.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cored/errors.hpp"
#include "cored/rng.hpp"
#include "cored/tensor.hpp"

namespace cored {

enum class Role { Teacher, Student };

enum class Activation { Relu, None };

struct Layer {
  Tensor weights;  // [in x out]
  Tensor bias;     // [out]
  Activation activation = Activation::Relu;
};

class Network {
 public:
  Network() = default;

  // Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.
  // layer_sizes = [input, hidden..., 2]; fresh networks are students.
  Network(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2) {
      throw ParameterError("network needs at least input and output extents");
    }
    for (std::size_t s : layer_sizes) {
      if (s == 0) throw ParameterError("network layer extent must be positive");
    }
    if (layer_sizes.back() != 2) {
      throw ParameterError("final layer extent must be 2, got " +
                           std::to_string(layer_sizes.back()));
    }
    Rng rng(seed);
    for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
      const std::size_t fan_in = layer_sizes[i], fan_out = layer_sizes[i + 1];
      const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
      Layer layer;
      layer.weights = Tensor(Shape{fan_in, fan_out}, 0.0, true);
      for (auto& w : layer.weights.data()) w = rng.uniform(-limit, limit);
      layer.bias = Tensor(Shape{fan_out}, 0.0, true);
      layer.activation = (i + 2 == layer_sizes.size()) ? Activation::None
                                                       : Activation::Relu;
      layers_.push_back(std::move(layer));
    }
  }

  Network(const Network& other) { copy_from(other); }
  Network& operator=(const Network& other) {
    if (this != &other) copy_from(other);
    return *this;
  }
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  Role role() const { return role_; }
  bool frozen() const { return role_ == Role::Teacher; }

  std::size_t input_dim() const { return layers_.front().weights.rows(); }
  std::size_t output_dim() const { return layers_.back().weights.cols(); }

  const std::vector<Layer>& layers() const { return layers_; }

  // parameter handles in fixed order (w0, b0, w1, b1, ...); the handles
  // alias network storage so in-place updates are visible everywhere
  std::vector<Tensor> parameter_tensors() const {
    std::vector<Tensor> out;
    out.reserve(layers_.size() * 2);
    for (const Layer& l : layers_) {
      out.push_back(l.weights);
      out.push_back(l.bias);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
  }

  void zero_grad() {
    for (Layer& l : layers_) {
      l.weights.zero_grad();
      l.bias.zero_grad();
    }
  }

  // FNV-1a over the raw little-endian bytes of every parameter, in order
  std::uint64_t parameter_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const Tensor& t) {
      for (double v : t.data()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int b = 0; b < 8; ++b) {
          h ^= (bits >> (8 * b)) & 0xffu;
          h *= 0x100000001b3ULL;
        }
      }
    };
    for (const Layer& l : layers_) {
      feed(l.weights);
      feed(l.bias);
    }
    return h;
  }

  std::vector<std::vector<double>> snapshot() const {
    std::vector<std::vector<double>> out;
    for (const Layer& l : layers_) {
      out.push_back(l.weights.data());
      out.push_back(l.bias.data());
    }
    return out;
  }

  void restore(const std::vector<std::vector<double>>& snap) {
    auto params = parameter_tensors();
    if (snap.size() != params.size()) {
      throw ContractError("snapshot does not match network layout");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (snap[i].size() != params[i].size()) {
        throw ContractError("snapshot tensor size mismatch");
      }
      params[i].data() = snap[i];
    }
  }

  friend Network clone_as_student(const Network& net);
  friend Network promote_to_teacher(const Network& net);
  friend Network load_checkpoint(const std::filesystem::path& path);

 private:
  void copy_from(const Network& other) {
    role_ = other.role_;
    layers_.clear();
    layers_.reserve(other.layers_.size());
    for (const Layer& l : other.layers_) {
      layers_.push_back(Layer{l.weights.clone(), l.bias.clone(), l.activation});
    }
  }

  void set_role(Role role) {
    role_ = role;
    const bool rg = role == Role::Student;
    for (Layer& l : layers_) {
      l.weights.set_requires_grad(rg);
      l.bias.set_requires_grad(rg);
      l.weights.zero_grad();
      l.bias.zero_grad();
    }
  }

  Role role_ = Role::Student;
  std::vector<Layer> layers_;
};

// trainable deep copy; updating the copy never mutates the source
inline Network clone_as_student(const Network& net) {
  Network out(net);
  out.set_role(Role::Student);
  return out;
}

// frozen deep copy with bitwise-identical parameters
inline Network promote_to_teacher(const Network& net) {
  Network out(net);
  out.set_role(Role::Teacher);
  return out;
}

inline Tensor forward(const Network& net, const Tensor& batch, Tape& tape) {
  if (net.layers().empty()) throw ContractError("forward on an empty network");
  if (batch.ndim() != 2 || batch.cols() != net.input_dim()) {
    throw DimensionError("forward: batch " + detail::shape_str(batch.shape()) +
                         " does not match input extent " +
                         std::to_string(net.input_dim()));
  }
  Tensor h = batch;
  for (const Layer& l : net.layers()) {
    h = add_bias(tape, matmul(tape, h, l.weights), l.bias);
    if (l.activation == Activation::Relu) h = relu(tape, h);
  }
  return h;
}

// evaluation-mode forward: same arithmetic, no backward graph
inline Tensor forward(const Network& net, const Tensor& batch) {
  Tape tape(false);
  return forward(net, batch, tape);
}

// ---------------------------------------------------------------------------
// checkpoint format CRDM, little-endian:
//   magic "CRDM" | version u16 | layer count u16
//   per layer: rows u32 | cols u32 | weights f64[rows*cols] | bias f64[cols]
// Hidden activations are implied (ReLU except the final layer).

namespace detail {

constexpr std::uint16_t kCheckpointVersion = 1;

struct ByteWriter {
  std::vector<unsigned char> bytes;
  void u16(std::uint16_t v) {
    bytes.push_back(v & 0xff);
    bytes.push_back((v >> 8) & 0xff);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back((v >> (8 * i)) & 0xff);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) bytes.push_back((bits >> (8 * i)) & 0xff);
  }
};

struct ByteReader {
  const std::vector<unsigned char>& bytes;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > bytes.size()) {
      throw FormatError(std::string("truncated file while reading ") + what,
                        bytes.size());
    }
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = std::uint16_t(bytes[pos]) |
                      std::uint16_t(bytes[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(bytes[pos + i]) << (8 * i);
    pos += 8;
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
};

inline std::vector<unsigned char> read_file_bytes(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw MissingInputError("cannot open " + path.string());
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace detail

inline void save_checkpoint(const Network& net,
                            const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.bytes.insert(w.bytes.end(), {'C', 'R', 'D', 'M'});
  w.u16(detail::kCheckpointVersion);
  w.u16(static_cast<std::uint16_t>(net.layers().size()));
  for (const Layer& l : net.layers()) {
    w.u32(static_cast<std::uint32_t>(l.weights.rows()));
    w.u32(static_cast<std::uint32_t>(l.weights.cols()));
    for (double v : l.weights.data()) w.f64(v);
    for (double v : l.bias.data()) w.f64(v);
  }
  detail::write_file_bytes(path, w.bytes);
}

// checkpoints load frozen (Teacher); clone_as_student to resume training
inline Network load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() < 4 ||
      !(bytes[0] == 'C' && bytes[1] == 'R' && bytes[2] == 'D' &&
        bytes[3] == 'M')) {
    throw FormatError("bad checkpoint magic", 0);
  }
  detail::ByteReader r{bytes};
  r.pos = 4;
  const std::uint16_t version = r.u16("version");
  if (version != detail::kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " +
                          std::to_string(version),
                      4);
  }
  const std::uint16_t layer_count = r.u16("layer count");
  if (layer_count == 0) throw FormatError("checkpoint has no layers", 6);

  Network net;
  std::size_t prev_cols = 0;
  for (std::uint16_t li = 0; li < layer_count; ++li) {
    const std::size_t header_at = r.pos;
    const std::uint32_t rows = r.u32("layer rows");
    const std::uint32_t cols = r.u32("layer cols");
    if (rows == 0 || cols == 0) {
      throw FormatError("layer extent must be positive", header_at);
    }
    if (li > 0 && rows != prev_cols) {
      throw FormatError("layer input extent " + std::to_string(rows) +
                            " does not chain from previous extent " +
                            std::to_string(prev_cols),
                        header_at);
    }
    Layer layer;
    layer.weights = Tensor(Shape{rows, cols}, 0.0, false);
    for (auto& v : layer.weights.data()) v = r.f64("weights");
    layer.bias = Tensor(Shape{cols}, 0.0, false);
    for (auto& v : layer.bias.data()) v = r.f64("bias");
    layer.activation = (li + 1 == layer_count) ? Activation::None
                                               : Activation::Relu;
    net.layers_.push_back(std::move(layer));
    prev_cols = cols;
  }
  if (prev_cols != 2) {
    throw FormatError("final layer extent must be 2, got " +
                          std::to_string(prev_cols),
                      r.pos);
  }
  if (r.pos != bytes.size()) {
    throw FormatError("trailing bytes after checkpoint payload", r.pos);
  }
  net.role_ = Role::Teacher;
  return net;
}

}  // namespace cored
