#include "amq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "amq/errors.hpp"
#include "amq/io.hpp"

namespace amq::nn {

namespace {

enum class Kind : std::uint8_t { Conv = 1, MaxPool = 2, Relu = 3, Dropout = 4, Flatten = 5, Dense = 6, Softmax = 7 };

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::string take() { return std::move(out_); }
  const std::string& view() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_++])) << (8 * i);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

  std::size_t pos() const { return pos_; }
  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError("checkpoint: " + msg + " at offset " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw FormatError("checkpoint: truncated while reading " + std::string(what) + " at offset " +
                        std::to_string(pos_) + " (file is " + std::to_string(in_.size()) + " bytes)");
    }
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

std::uint32_t narrow(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw FormatError(std::string("checkpoint: ") + what + " too large");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string encode_checkpoint(const ModelConfig& config, const Parameters& params) {
  config.validate();
  const Parameters reference = Parameters::zeros(config);
  if (params.layers.size() != reference.layers.size()) throw ShapeError("checkpoint: parameter layout mismatch");
  Writer w;
  w.bytes("AMQM", 4);
  w.u32(kCheckpointVersion);
  w.u32(narrow(config.in_channels, "in_channels"));
  w.u32(narrow(config.in_height, "in_height"));
  w.u32(narrow(config.in_width, "in_width"));
  w.u32(narrow(config.n_classes, "n_classes"));
  w.u32(narrow(config.layers.size(), "layer count"));
  for (const auto& layer : config.layers) {
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      w.u8(static_cast<std::uint8_t>(Kind::Conv));
      w.u32(narrow(c->out_channels, "channels"));
      w.u32(narrow(c->kernel, "kernel"));
      w.u32(narrow(c->stride, "stride"));
      w.u32(narrow(c->pad, "pad"));
    } else if (std::holds_alternative<MaxPoolLayer>(layer)) {
      w.u8(static_cast<std::uint8_t>(Kind::MaxPool));
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      w.u8(static_cast<std::uint8_t>(Kind::Relu));
    } else if (const auto* d = std::get_if<DropoutLayer>(&layer)) {
      w.u8(static_cast<std::uint8_t>(Kind::Dropout));
      w.f64(d->rate);
    } else if (std::holds_alternative<FlattenLayer>(layer)) {
      w.u8(static_cast<std::uint8_t>(Kind::Flatten));
    } else if (const auto* f = std::get_if<DenseLayer>(&layer)) {
      w.u8(static_cast<std::uint8_t>(Kind::Dense));
      w.u32(narrow(f->out_features, "features"));
    } else {
      w.u8(static_cast<std::uint8_t>(Kind::Softmax));
    }
  }
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& p = params.layers[i];
    const auto& r = reference.layers[i];
    if (p.weights.shape() != r.weights.shape() || p.bias.shape() != r.bias.shape()) {
      throw ShapeError("checkpoint: parameter shape mismatch at layer " + std::to_string(i));
    }
    for (double v : p.weights.data()) w.f32(static_cast<float>(v));
    for (double v : p.bias.data()) w.f32(static_cast<float>(v));
  }
  w.u64(io::fnv1a64(w.view()));
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "AMQM", 4) != 0) {
    throw FormatError("checkpoint: bad magic at offset 0 (expected \"AMQM\")");
  }
  for (int i = 0; i < 4; ++i) r.u8("magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " at offset 4");
  }
  Checkpoint ck;
  ck.config.in_channels = r.u32("in_channels");
  ck.config.in_height = r.u32("in_height");
  ck.config.in_width = r.u32("in_width");
  ck.config.n_classes = r.u32("n_classes");
  const std::uint32_t layer_count = r.u32("layer count");
  if (layer_count > 4096) r.fail("implausible layer count " + std::to_string(layer_count));
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    const auto kind = static_cast<Kind>(r.u8("layer kind"));
    switch (kind) {
      case Kind::Conv: {
        ConvLayer c;
        c.out_channels = r.u32("conv channels");
        c.kernel = r.u32("conv kernel");
        c.stride = r.u32("conv stride");
        c.pad = r.u32("conv pad");
        ck.config.layers.emplace_back(c);
        break;
      }
      case Kind::MaxPool: ck.config.layers.emplace_back(MaxPoolLayer{}); break;
      case Kind::Relu: ck.config.layers.emplace_back(ReluLayer{}); break;
      case Kind::Dropout: ck.config.layers.emplace_back(DropoutLayer{r.f64("dropout rate")}); break;
      case Kind::Flatten: ck.config.layers.emplace_back(FlattenLayer{}); break;
      case Kind::Dense: ck.config.layers.emplace_back(DenseLayer{r.u32("dense features")}); break;
      case Kind::Softmax: ck.config.layers.emplace_back(SoftmaxLayer{}); break;
      default: r.fail("unknown layer kind " + std::to_string(static_cast<int>(kind)));
    }
  }
  try {
    ck.config.validate();
    ck.params = Parameters::zeros(ck.config);
  } catch (const std::exception& e) {
    r.fail(std::string("invalid layer table (") + e.what() + ")");
  }
  // Bound the payload before reading it so a corrupt header cannot make us
  // iterate over billions of phantom values.
  if ((bytes.size() - r.pos()) / 4 < ck.params.count()) {
    throw FormatError("checkpoint: truncated parameter data at offset " + std::to_string(r.pos()) + " (need " +
                      std::to_string(ck.params.count() * 4 + 8) + " more bytes, have " +
                      std::to_string(bytes.size() - r.pos()) + ")");
  }
  for (auto& layer : ck.params.layers) {
    for (auto& v : layer.weights.data()) v = r.f32("weights");
    for (auto& v : layer.bias.data()) v = r.f32("bias");
  }
  const std::size_t body = r.pos();
  const std::uint64_t stored = r.u64("checksum");
  if (r.pos() != bytes.size()) r.fail("trailing bytes after checksum");
  const std::uint64_t actual = io::fnv1a64(std::string_view(bytes).substr(0, body));
  if (stored != actual) throw FormatError("checkpoint: checksum mismatch at offset " + std::to_string(body));
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const Parameters& params) {
  const std::string bytes = encode_checkpoint(config, params);
  io::write_atomically(path, true,
                       [&](std::ostream& out) { out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); });
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace amq::nn
