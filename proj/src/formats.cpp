#include "ffc/formats.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "ffc/error.hpp"

namespace ffc {
namespace {

constexpr char kTensorMagic[] = "FFCTENS1";
constexpr char kSpectrumMagic[] = "FFCSPEC1";
constexpr char kImportanceMagic[] = "FFCIMP01";
constexpr char kCheckpointMagic[] = "FFCCKPT1";

// Guards against absurd headers before any allocation happens.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

class Writer {
 public:
  void magic(const char* m) { bytes_.insert(bytes_.end(), m, m + 8); }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u32_be(std::uint32_t v) {
    for (int i = 3; i >= 0; --i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<unsigned char>(bits >> (8 * i)));
  }
  void f64_be(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 7; i >= 0; --i) bytes_.push_back(static_cast<unsigned char>(bits >> (8 * i)));
  }
  void text(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  const std::vector<unsigned char>& bytes() const { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class Reader {
 public:
  Reader(std::vector<unsigned char> bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  void expect_magic(const char* m) {
    need(8, "magic");
    if (std::memcmp(bytes_.data() + pos_, m, 8) != 0) {
      throw DataError(source_ + ": bad magic, expected " + std::string(m, 8));
    }
    pos_ += 8;
  }
  std::uint8_t u8() {
    need(1, "byte");
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint32_t u32_be() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8, "f64");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  std::uint64_t be(std::size_t width) {
    need(width, "value");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += width;
    return v;
  }
  /// Reads up to and including "\n\n"; returns the text before it.
  std::string text_block() {
    for (std::size_t i = pos_; i + 1 < bytes_.size(); ++i) {
      if (bytes_[i] == '\n' && bytes_[i + 1] == '\n') {
        std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), bytes_.begin() + static_cast<std::ptrdiff_t>(i + 1));
        pos_ = i + 2;
        return s;
      }
    }
    throw DataError(source_ + ": unterminated header block");
  }
  void need(std::uint64_t n, const char* what) const {
    if (n > bytes_.size() - pos_) throw DataError(source_ + ": truncated while reading " + what);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0) throw DataError(source_ + ": " + std::to_string(remaining()) + " trailing bytes");
  }
  const std::string& source() const { return source_; }

 private:
  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
  std::string source_;
};

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw UsageError(std::string(what) + " exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

std::uint64_t checked_product(const std::vector<std::size_t>& dims, const std::string& source) {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d == 0) throw DataError(source + ": zero dimension");
    if (n > kMaxElements / d) throw DataError(source + ": dimension product overflows");
    n *= d;
  }
  return n;
}

Reader open(const std::filesystem::path& path) { return Reader(read_file_bytes(path), path.string()); }

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::size_t> split_sizes(const std::string& s, const std::string& source) {
  std::vector<std::size_t> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoul(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw DataError(source + ": bad integer list '" + s + "'");
    }
  }
  return out;
}

}  // namespace

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write to a sibling temp file and rename so a failure leaves no partial output.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_tensor_file(const std::filesystem::path& path, const Tensor& tensor) {
  Writer w;
  w.magic(kTensorMagic);
  w.u32(to_u32(tensor.rank(), "rank"));
  for (auto d : tensor.shape()) w.u32(to_u32(d, "dimension"));
  for (double v : tensor.values()) w.f64(v);
  write_file_bytes(path, w.bytes());
}

Tensor load_tensor_file(const std::filesystem::path& path) {
  Reader r = open(path);
  r.expect_magic(kTensorMagic);
  const std::uint32_t rank = r.u32();
  if (rank == 0 || rank > 8) throw DataError(r.source() + ": unsupported rank " + std::to_string(rank));
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = r.u32();
  const auto n = checked_product(shape, r.source());
  r.need(n * 8, "tensor payload");
  std::vector<double> values(n);
  for (auto& v : values) v = r.f64();
  r.expect_end();
  return Tensor(std::move(shape), std::move(values));
}

void save_spectrum_file(const std::filesystem::path& path, const MultiSpectrum& spectrum) {
  Writer w;
  w.magic(kSpectrumMagic);
  w.u32(to_u32(spectrum.height(), "height"));
  w.u32(to_u32(spectrum.width(), "width"));
  w.u32(to_u32(spectrum.channels(), "channels"));
  for (std::size_t c = 0; c < spectrum.channels(); ++c) {
    for (const auto& z : spectrum[c].values) {
      w.f64(z.real());
      w.f64(z.imag());
    }
  }
  write_file_bytes(path, w.bytes());
}

MultiSpectrum load_spectrum_file(const std::filesystem::path& path) {
  Reader r = open(path);
  r.expect_magic(kSpectrumMagic);
  const std::size_t h = r.u32(), w = r.u32(), c = r.u32();
  const auto n = checked_product({h, w, c}, r.source());
  r.need(n * 16, "spectrum payload");
  std::vector<Spectrum> channels;
  for (std::size_t k = 0; k < c; ++k) {
    Spectrum s(h, w);
    for (auto& z : s.values) {
      const double re = r.f64();
      z = {re, r.f64()};
    }
    channels.push_back(std::move(s));
  }
  r.expect_end();
  return MultiSpectrum(std::move(channels));
}

void save_importance_file(const std::filesystem::path& path, const ImportanceMap& map) {
  map.validate();
  Writer w;
  w.magic(kImportanceMagic);
  w.u8(static_cast<std::uint8_t>(map.domain));
  w.u32(to_u32(map.channels, "channels"));
  w.u32(to_u32(map.height, "height"));
  w.u32(to_u32(map.width, "width"));
  for (double s : map.scores) w.f64(s);
  write_file_bytes(path, w.bytes());
}

ImportanceMap load_importance_file(const std::filesystem::path& path) {
  Reader r = open(path);
  r.expect_magic(kImportanceMagic);
  const std::uint8_t tag = r.u8();
  if (tag > 1) throw DataError(r.source() + ": unknown domain tag " + std::to_string(tag));
  const std::size_t c = r.u32(), h = r.u32(), w = r.u32();
  const auto n = checked_product({c, h, w}, r.source());
  r.need(n * 8, "scores");
  std::vector<double> scores(n);
  for (auto& s : scores) s = r.f64();
  r.expect_end();
  ImportanceMap map(static_cast<Domain>(tag), c, h, w, std::move(scores));
  return map;
}

std::string checkpoint_header(const Checkpoint& model) {
  const auto& s = model.spec;
  std::ostringstream os;
  os << "arch=" << to_string(s.arch) << '\n'
     << "input_shape=" << s.input_shape[0] << ',' << s.input_shape[1] << ',' << s.input_shape[2] << '\n'
     << "classes=" << s.classes << '\n'
     << "hidden=" << join(s.hidden) << '\n'
     << "conv_channels=" << join(s.conv_channels) << '\n'
     << "kernel=" << s.kernel << '\n'
     << "activation=" << s.activation << '\n'
     << "parameters=" << model.parameters.size() << '\n'
     << "seed=" << model.meta.seed << '\n'
     << "epochs=" << model.meta.epochs << '\n'
     << "step_size=" << format_double(model.meta.step_size) << '\n'
     << "batch_size=" << model.meta.batch_size << '\n'
     << "final_loss=" << format_double(model.meta.final_loss) << '\n'
     << "final_accuracy=" << format_double(model.meta.final_accuracy) << '\n';
  return os.str();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& model) {
  model.validate();
  Writer w;
  w.magic(kCheckpointMagic);
  w.text(checkpoint_header(model));
  w.text("\n");
  for (double p : model.parameters) w.f64(p);
  write_file_bytes(path, w.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r = open(path);
  r.expect_magic(kCheckpointMagic);
  std::map<std::string, std::string> kv;
  {
    std::istringstream lines(r.text_block());
    std::string line;
    while (std::getline(lines, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw DataError(r.source() + ": malformed header line '" + line + "'");
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError(r.source() + ": header lacks '" + key + "'");
    return it->second;
  };
  auto number = [&](const std::string& key) {
    try {
      return std::stod(get(key));
    } catch (const std::invalid_argument&) {
      throw DataError(r.source() + ": bad number for '" + key + "'");
    }
  };
  Checkpoint ck;
  try {
    ck.spec.arch = parse_architecture(get("arch"));
  } catch (const UsageError& e) {
    throw DataError(r.source() + ": " + e.what());
  }
  const auto shape = split_sizes(get("input_shape"), r.source());
  if (shape.size() != 3) throw DataError(r.source() + ": input_shape needs three entries");
  ck.spec.input_shape = {shape[0], shape[1], shape[2]};
  ck.spec.classes = split_sizes(get("classes"), r.source()).at(0);
  ck.spec.hidden = split_sizes(get("hidden"), r.source());
  ck.spec.conv_channels = split_sizes(get("conv_channels"), r.source());
  ck.spec.kernel = split_sizes(get("kernel"), r.source()).at(0);
  ck.spec.activation = get("activation");
  ck.meta.seed = std::stoull(get("seed"));
  ck.meta.epochs = split_sizes(get("epochs"), r.source()).at(0);
  ck.meta.step_size = number("step_size");
  ck.meta.batch_size = split_sizes(get("batch_size"), r.source()).at(0);
  ck.meta.final_loss = number("final_loss");
  ck.meta.final_accuracy = number("final_accuracy");
  const auto count = split_sizes(get("parameters"), r.source()).at(0);
  if (count > kMaxElements) throw DataError(r.source() + ": parameter count overflows");
  r.need(std::uint64_t{count} * 8, "parameters");
  ck.parameters.resize(count);
  for (auto& p : ck.parameters) p = r.f64();
  r.expect_end();
  try {
    ck.validate();
  } catch (const UsageError& e) {
    throw DataError(r.source() + ": " + e.what());
  }
  return ck;
}

namespace {

struct IdxPayload {
  IdxType type;
  std::vector<std::size_t> dims;
  std::vector<double> values;
};

IdxPayload read_idx(const std::filesystem::path& path) {
  Reader r = open(path);
  const std::uint32_t magic = r.u32_be();
  if ((magic >> 16) != 0) throw DataError(r.source() + ": bad IDX magic");
  const auto code = static_cast<unsigned char>((magic >> 8) & 0xff);
  const std::size_t rank = magic & 0xff;
  std::size_t width = 0;
  switch (code) {
    case 0x08: case 0x09: width = 1; break;
    case 0x0B: width = 2; break;
    case 0x0C: case 0x0D: width = 4; break;
    case 0x0E: width = 8; break;
    default: throw DataError(r.source() + ": unknown IDX element type");
  }
  if (rank == 0 || rank > 4) throw DataError(r.source() + ": unsupported IDX rank " + std::to_string(rank));
  IdxPayload out{static_cast<IdxType>(code), std::vector<std::size_t>(rank), {}};
  for (auto& d : out.dims) d = r.u32_be();
  const auto n = checked_product(out.dims, r.source());
  r.need(n * width, "IDX payload");
  out.values.resize(n);
  for (auto& v : out.values) {
    const std::uint64_t raw = r.be(width);
    switch (out.type) {
      case IdxType::u8: v = static_cast<double>(raw) / 255.0; break;
      case IdxType::i8: v = static_cast<double>(static_cast<std::int8_t>(raw)); break;
      case IdxType::i16: v = static_cast<double>(static_cast<std::int16_t>(raw)); break;
      case IdxType::i32: v = static_cast<double>(static_cast<std::int32_t>(raw)); break;
      case IdxType::f32: v = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(raw))); break;
      case IdxType::f64: v = std::bit_cast<double>(raw); break;
    }
  }
  r.expect_end();
  return out;
}

}  // namespace

Tensor load_idx_images(const std::filesystem::path& path) {
  auto p = read_idx(path);
  std::vector<std::size_t> shape;
  if (p.dims.size() == 3) {
    shape = {p.dims[0], 1, p.dims[1], p.dims[2]};
  } else if (p.dims.size() == 4) {
    shape = p.dims;
  } else {
    throw DataError(path.string() + ": image files must be rank 3 or 4");
  }
  Tensor t(std::move(shape), std::move(p.values));
  if (!t.all_finite()) throw DataError(path.string() + ": non-finite image values");
  return t;
}

std::vector<std::size_t> load_idx_labels(const std::filesystem::path& path) {
  const auto p = read_idx(path);
  if (p.dims.size() != 1) throw DataError(path.string() + ": label files must be rank 1");
  if (p.type == IdxType::f32 || p.type == IdxType::f64) throw DataError(path.string() + ": labels must be integers");
  std::vector<std::size_t> labels;
  labels.reserve(p.values.size());
  for (double v : p.values) {
    // u8 payloads were rescaled on read; undo that for labels.
    const double raw = p.type == IdxType::u8 ? std::round(v * 255.0) : v;
    if (raw < 0) throw DataError(path.string() + ": negative label");
    labels.push_back(static_cast<std::size_t>(raw));
  }
  return labels;
}

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t classes) {
  const Tensor all = load_idx_images(images);
  auto lab = load_idx_labels(labels);
  if (lab.size() != all.dim(0)) throw DataError("image and label counts differ");
  LabeledDataset data;
  data.classes = classes;
  if (data.classes == 0 && !lab.empty()) data.classes = *std::max_element(lab.begin(), lab.end()) + 1;
  data.labels = std::move(lab);
  data.samples.reserve(all.dim(0));
  for (std::size_t i = 0; i < all.dim(0); ++i) data.samples.push_back(all.at(i));
  data.validate();
  return data;
}

std::filesystem::path idx_labels_path(const std::filesystem::path& images) {
  auto p = images;
  p.replace_filename(images.stem().string() + "-labels" + images.extension().string());
  return p;
}

void save_idx_images(const std::filesystem::path& path, const Tensor& images, IdxType type) {
  if (images.rank() != 4) throw UsageError("IDX image export expects [N,C,H,W]");
  if (type != IdxType::f64 && type != IdxType::u8) throw UsageError("IDX image export supports u8 and f64 only");
  const bool single = images.dim(1) == 1;
  Writer w;
  const std::uint32_t rank = single ? 3 : 4;
  w.u32_be((static_cast<std::uint32_t>(type) << 8) | rank);
  w.u32_be(to_u32(images.dim(0), "count"));
  if (!single) w.u32_be(to_u32(images.dim(1), "channels"));
  w.u32_be(to_u32(images.dim(2), "height"));
  w.u32_be(to_u32(images.dim(3), "width"));
  for (double v : images.values()) {
    if (type == IdxType::f64) {
      w.f64_be(v);
    } else {
      w.u8(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    }
  }
  write_file_bytes(path, w.bytes());
}

void save_idx_labels(const std::filesystem::path& path, const std::vector<std::size_t>& labels) {
  Writer w;
  w.u32_be(0x00000801);
  w.u32_be(to_u32(labels.size(), "count"));
  for (auto l : labels) {
    if (l > 255) throw UsageError("IDX u8 labels must be below 256");
    w.u8(static_cast<std::uint8_t>(l));
  }
  write_file_bytes(path, w.bytes());
}

}  // namespace ffc
