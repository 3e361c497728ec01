#include "ttgp/tt_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace ttgp {

namespace {

constexpr char kTag[4] = {'T', 'T', 'v', '1'};
constexpr const char* kTagString = "TTv1";

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes_[pos_ + b]) << (8 * b);
    pos_ += 8;
    return v;
  }

  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw ParseError(std::string("truncated input while reading ") + what, pos_);
    }
  }

  const std::uint8_t* cursor() const { return bytes_.data() + pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Keeps a corrupt header from requesting an absurd allocation.
constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 32;

}  // namespace

std::vector<std::uint8_t> tt_serialize(const TensorTrain& tt) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 8 * (2 * tt.mode_sizes().size() + 2) + 8 * tt.parameter_count());
  out.insert(out.end(), std::begin(kTag), std::end(kTag));
  put_u64(out, static_cast<std::uint64_t>(tt.order()));
  for (Index n : tt.mode_sizes()) put_u64(out, static_cast<std::uint64_t>(n));
  for (Index r : tt.ranks()) put_u64(out, static_cast<std::uint64_t>(r));
  for (const Core& c : tt.cores()) {
    for (double v : c.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

TensorTrain tt_deserialize(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  in.need(4, "format tag");
  if (std::memcmp(in.cursor(), kTag, 3) != 0) {
    throw ParseError("missing TTv format tag", 0);
  }
  if (in.cursor()[3] != static_cast<std::uint8_t>(kTag[3])) {
    throw UnsupportedVersionError(std::string("unsupported TT format version '") +
                                  static_cast<char>(in.cursor()[3]) + "', expected " + kTagString);
  }
  in.skip(4);

  const std::size_t d_offset = in.offset();
  const std::uint64_t d = in.u64("order");
  if (d == 0 || d > kMaxDim) throw ParseError("invalid tensor order " + std::to_string(d), d_offset);

  in.need(8 * (2 * d + 1), "header");
  std::vector<Index> modes(d);
  for (auto& n : modes) {
    const std::size_t at = in.offset();
    const std::uint64_t v = in.u64("mode size");
    if (v == 0 || v > kMaxDim) throw ParseError("invalid mode size", at);
    n = static_cast<Index>(v);
  }
  std::vector<Index> ranks(d + 1);
  for (auto& r : ranks) {
    const std::size_t at = in.offset();
    const std::uint64_t v = in.u64("rank");
    if (v == 0 || v > kMaxDim) throw ParseError("invalid rank", at);
    r = static_cast<Index>(v);
  }
  if (ranks.front() != 1 || ranks.back() != 1) {
    throw ParseError("boundary ranks must be 1", in.offset());
  }

  std::vector<Core> cores;
  cores.reserve(d);
  for (std::size_t k = 0; k < d; ++k) {
    const std::uint64_t count = static_cast<std::uint64_t>(ranks[k]) *
                                static_cast<std::uint64_t>(modes[k]) *
                                static_cast<std::uint64_t>(ranks[k + 1]);
    if (count > in.remaining() / 8) {
      throw ParseError("truncated input while reading core " + std::to_string(k + 1),
                       in.offset());
    }
    std::vector<double> values(count);
    for (auto& v : values) v = in.f64("core value");
    cores.emplace_back(ranks[k], modes[k], ranks[k + 1], std::move(values));
  }
  if (in.remaining() != 0) throw ParseError("trailing bytes after last core", in.offset());
  return TensorTrain(std::move(cores));
}

nlohmann::json tt_to_json(const TensorTrain& tt) {
  nlohmann::json doc;
  doc["format_tag"] = kTagString;
  doc["d"] = tt.order();
  doc["mode_sizes"] = tt.mode_sizes();
  doc["ranks"] = tt.ranks();
  nlohmann::json cores = nlohmann::json::array();
  for (const Core& c : tt.cores()) {
    nlohmann::json jc = nlohmann::json::array();
    for (Index a = 0; a < c.r_left(); ++a) {
      nlohmann::json ja = nlohmann::json::array();
      for (Index i = 0; i < c.n(); ++i) {
        nlohmann::json ji = nlohmann::json::array();
        for (Index b = 0; b < c.r_right(); ++b) ji.push_back(c(a, i, b));
        ja.push_back(std::move(ji));
      }
      jc.push_back(std::move(ja));
    }
    cores.push_back(std::move(jc));
  }
  doc["cores"] = std::move(cores);
  return doc;
}

TensorTrain tt_from_json(const nlohmann::json& doc) {
  try {
    const std::string tag = doc.at("format_tag").get<std::string>();
    if (tag.rfind("TTv", 0) != 0) throw ParseError("missing TTv format tag", 0);
    if (tag != kTagString) throw UnsupportedVersionError("unsupported TT format version " + tag);
    const auto d = doc.at("d").get<Index>();
    const auto modes = doc.at("mode_sizes").get<std::vector<Index>>();
    const auto ranks = doc.at("ranks").get<std::vector<Index>>();
    const auto& jcores = doc.at("cores");
    if (d < 1 || static_cast<Index>(modes.size()) != d || static_cast<Index>(ranks.size()) != d + 1 ||
        static_cast<Index>(jcores.size()) != d) {
      throw ParseError("inconsistent TT header fields", 0);
    }
    std::vector<Core> cores;
    for (Index k = 0; k < d; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      Core c(ranks[ku], modes[ku], ranks[ku + 1]);
      const auto& jc = jcores[ku];
      if (static_cast<Index>(jc.size()) != c.r_left()) throw ParseError("core shape mismatch", ku);
      for (Index a = 0; a < c.r_left(); ++a) {
        const auto& ja = jc[static_cast<std::size_t>(a)];
        if (static_cast<Index>(ja.size()) != c.n()) throw ParseError("core shape mismatch", ku);
        for (Index i = 0; i < c.n(); ++i) {
          const auto& ji = ja[static_cast<std::size_t>(i)];
          if (static_cast<Index>(ji.size()) != c.r_right()) throw ParseError("core shape mismatch", ku);
          for (Index b = 0; b < c.r_right(); ++b) c(a, i, b) = ji[static_cast<std::size_t>(b)].get<double>();
        }
      }
      cores.push_back(std::move(c));
    }
    return TensorTrain(std::move(cores));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed TT JSON: ") + e.what(), 0);
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file", path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file", path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed", path.string());
}

void save_tt(const std::filesystem::path& path, const TensorTrain& tt) {
  if (path.extension() == ".json") {
    const std::string text = tt_to_json(tt).dump(1) + "\n";
    write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  } else {
    write_file_bytes(path, tt_serialize(tt));
  }
}

TensorTrain load_tt(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  if (!bytes.empty() && bytes.front() == '{') {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed TT JSON: ") + e.what(), e.byte);
    }
    return tt_from_json(doc);
  }
  return tt_deserialize(bytes);
}

}  // namespace ttgp
