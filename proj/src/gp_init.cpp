#include "ttgp/gp_init.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "json.hpp"

namespace ttgp {

// --- ObservationSet ---------------------------------------------------------

ObservationSet::ObservationSet(std::vector<Index> mode_sizes,
                               const Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>& indices,
                               Eigen::VectorXd values)
    : modes_(std::move(mode_sizes)), values_(std::move(values)) {
  if (indices.cols() != static_cast<Index>(modes_.size())) {
    throw ShapeError("observation indices need one column per mode");
  }
  if (indices.rows() != values_.size()) throw ShapeError("observation indices and values differ in length");
  std::vector<Index> packed(static_cast<std::size_t>(indices.size()));
  for (Index r = 0; r < indices.rows(); ++r) {
    for (Index k = 0; k < indices.cols(); ++k) packed[static_cast<std::size_t>(r * indices.cols() + k)] = indices(r, k);
  }
  init(packed);
}

ObservationSet::ObservationSet(std::vector<Index> mode_sizes, std::span<const Index> packed_one_based,
                               Eigen::VectorXd values)
    : modes_(std::move(mode_sizes)), values_(std::move(values)) {
  if (modes_.empty() || static_cast<Index>(packed_one_based.size()) != values_.size() * order()) {
    throw ShapeError("observation indices and values differ in length");
  }
  init(packed_one_based);
}

void ObservationSet::init(std::span<const Index> packed) {
  if (modes_.empty()) throw ShapeError("observations need at least one mode");
  for (Index n : modes_) {
    if (n < 1) throw DomainError("mode sizes must be positive");
  }
  if (!values_.allFinite()) throw DomainError("observation values must be finite");
  const Index d = order();
  const Index count = values_.size();
  idx_.resize(packed.size());
  for (Index r = 0; r < count; ++r) {
    for (Index k = 0; k < d; ++k) {
      const Index v = packed[static_cast<std::size_t>(r * d + k)];
      if (v < 1 || v > modes_[static_cast<std::size_t>(k)]) {
        throw DomainError("observation " + std::to_string(r + 1) + ": index " + std::to_string(v) +
                          " out of range in mode " + std::to_string(k + 1));
      }
      idx_[static_cast<std::size_t>(r * d + k)] = v - 1;
    }
  }
  std::vector<Index> order_rows(static_cast<std::size_t>(count));
  std::iota(order_rows.begin(), order_rows.end(), Index{0});
  auto row_less = [&](Index a, Index b) {
    return std::lexicographical_compare(idx_.begin() + a * d, idx_.begin() + (a + 1) * d,
                                        idx_.begin() + b * d, idx_.begin() + (b + 1) * d);
  };
  std::sort(order_rows.begin(), order_rows.end(), row_less);
  for (std::size_t i = 1; i < order_rows.size(); ++i) {
    if (!row_less(order_rows[i - 1], order_rows[i])) {
      const Index a = std::min(order_rows[i - 1], order_rows[i]);
      const Index b = std::max(order_rows[i - 1], order_rows[i]);
      throw DomainError("duplicate observation index at rows " + std::to_string(a + 1) + " and " +
                        std::to_string(b + 1));
    }
  }
}

MultiIndex ObservationSet::index(Index row) const {
  return MultiIndex::from_zero_based(zero_based(row));
}

Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> ObservationSet::index_matrix() const {
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic> m(size(), order());
  for (Index r = 0; r < size(); ++r) {
    for (Index k = 0; k < order(); ++k) m(r, k) = idx_[static_cast<std::size_t>(r * order() + k)] + 1;
  }
  return m;
}

Eigen::MatrixXd ObservationSet::rescaled_inputs() const {
  Eigen::MatrixXd x(size(), order());
  std::vector<double> row(static_cast<std::size_t>(order()));
  for (Index r = 0; r < size(); ++r) {
    rescale_zero_based(zero_based(r), modes_, row);
    for (Index k = 0; k < order(); ++k) x(r, k) = row[static_cast<std::size_t>(k)];
  }
  return x;
}

ObservationSet ObservationSet::subset(std::span<const Index> rows) const {
  std::vector<Index> packed;
  packed.reserve(rows.size() * static_cast<std::size_t>(order()));
  Eigen::VectorXd vals(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index r = rows[i];
    if (r < 0 || r >= size()) throw DomainError("observation subset row out of range");
    for (Index v : zero_based(r)) packed.push_back(v + 1);
    vals(static_cast<Index>(i)) = values_(r);
  }
  return ObservationSet(modes_, packed, std::move(vals));
}

// --- rescaling ----------------------------------------------------------------

void rescale_zero_based(std::span<const Index> idx, std::span<const Index> mode_sizes, std::span<double> out) {
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Index n = mode_sizes[k];
    out[k] = n > 1 ? static_cast<double>(idx[k]) / static_cast<double>(n - 1) : 0.5;
  }
}

std::vector<double> rescale_index(const MultiIndex& idx, std::span<const Index> mode_sizes) {
  idx.check(mode_sizes);
  const std::vector<Index> z = idx.zero_based();
  std::vector<double> out(z.size());
  rescale_zero_based(z, mode_sizes, out);
  return out;
}

// --- files --------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    std::size_t start = field.find_first_not_of(' ');
    out.push_back(start == std::string::npos ? std::string() : field.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& s, std::size_t line) {
  T value{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ParseError("bad number '" + s + "' on line " + std::to_string(line), line);
  return value;
}

}  // namespace

std::vector<Index> load_mode_sizes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mode-size file", path.string());
  nlohmann::json doc;
  try {
    in >> doc;
    return doc.at("mode_sizes").get<std::vector<Index>>();
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed mode-size file: ") + e.what(), e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed mode-size file: ") + e.what(), 0);
  }
}

ObservationSet load_observations(const std::filesystem::path& csv, std::span<const Index> mode_sizes) {
  if (!std::filesystem::exists(csv)) throw IoError("cannot open observations", csv.string());
  std::vector<Index> modes(mode_sizes.begin(), mode_sizes.end());
  if (modes.empty()) {
    std::filesystem::path sidecar = csv;
    sidecar += ".json";
    if (!std::filesystem::exists(sidecar)) {
      throw IoError("mode sizes not given and no sidecar found", sidecar.string());
    }
    modes = load_mode_sizes(sidecar);
  }
  std::ifstream in(csv);
  if (!in) throw IoError("cannot open observations", csv.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("observations file is empty", 1);
  const std::vector<std::string> header = split_csv_line(line);
  const std::size_t d = modes.size();
  if (header.size() != d + 1) {
    throw ParseError("header has " + std::to_string(header.size()) + " columns, expected " + std::to_string(d + 1), 1);
  }
  for (std::size_t k = 0; k < d; ++k) {
    if (header[k] != "i_" + std::to_string(k + 1)) throw ParseError("unexpected header column '" + header[k] + "'", 1);
  }
  if (header[d] != "y") throw ParseError("last header column must be 'y'", 1);

  std::vector<Index> packed;
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != d + 1) throw ParseError("wrong column count on line " + std::to_string(lineno), lineno);
    for (std::size_t k = 0; k < d; ++k) packed.push_back(parse_number<Index>(fields[k], lineno));
    values.push_back(parse_number<double>(fields[d], lineno));
  }
  if (values.empty()) throw ParseError("observations file has no data rows", lineno);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Index>(values.size()));
  return ObservationSet(std::move(modes), packed, std::move(y));
}

void save_observations(const ObservationSet& obs, const std::filesystem::path& csv) {
  std::ofstream out(csv);
  if (!out) throw IoError("cannot write observations", csv.string());
  for (Index k = 0; k < obs.order(); ++k) out << "i_" << (k + 1) << ",";
  out << "y\n";
  char buf[64];
  for (Index r = 0; r < obs.size(); ++r) {
    for (Index v : obs.zero_based(r)) out << (v + 1) << ",";
    auto res = std::to_chars(buf, buf + sizeof(buf), obs.value(r));
    out.write(buf, res.ptr - buf);
    out << "\n";
  }
  std::filesystem::path sidecar = csv;
  sidecar += ".json";
  std::ofstream side(sidecar);
  if (!side) throw IoError("cannot write sidecar", sidecar.string());
  side << nlohmann::json{{"mode_sizes", obs.mode_sizes()}}.dump() << "\n";
}

// --- initialization -------------------------------------------------------------

BlackBox gp_mean_black_box(const GpModel& model, std::span<const Index> mode_sizes) {
  const Index d = static_cast<Index>(mode_sizes.size());
  if (model.dimension() != d) throw ShapeError("GP dimension does not match the grid order");
  std::vector<Index> modes(mode_sizes.begin(), mode_sizes.end());
  return BlackBox(d, [&model, modes, d](std::span<const Index> idx, Index count, std::span<double> out) {
    Eigen::MatrixXd x(count, d);
    for (Index p = 0; p < count; ++p) {
      for (Index k = 0; k < d; ++k) {
        const Index n = modes[static_cast<std::size_t>(k)];
        const Index i = idx[static_cast<std::size_t>(p * d + k)] - 1;
        x(p, k) = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5;
      }
    }
    const Eigen::VectorXd mean = model.predict_mean(x);
    std::copy(mean.data(), mean.data() + count, out.begin());
  });
}

InitReport gp_tt_init(const ObservationSet& obs, const InitOptions& opts) {
  if (obs.size() < 2) throw DomainError("GP initialization needs at least two observations");
  InitReport report;
  try {
    report.gp = fit_gp(obs.rescaled_inputs(), obs.values(), opts.gp);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("gp", e.what());
  }
  try {
    BlackBox f = gp_mean_black_box(report.gp, obs.mode_sizes());
    report.cross = tt_cross_adaptive(f, obs.mode_sizes(), opts.cross);
  } catch (const std::exception& e) {
    throw StageError("cross", e.what());
  }
  report.tt0 = report.cross.tt;
  double sse = 0.0;
  for (Index r = 0; r < obs.size(); ++r) {
    const double e = tt_eval_unchecked(report.tt0, obs.zero_based(r)) - obs.value(r);
    sse += e * e;
  }
  report.train_error = sse / static_cast<double>(obs.size());
  return report;
}

TensorTrain random_init(const ObservationSet& obs, std::span<const Index> ranks, std::uint64_t seed) {
  TensorTrain tt = tt_random(obs.mode_sizes(), ranks, seed);
  const double target = obs.values().norm() * std::sqrt(grid_size(obs.mode_sizes()) / static_cast<double>(obs.size()));
  const double norm = tt_norm(tt);
  return tt_scale(tt, norm > 0 ? target / norm : 0.0);
}

TensorTrain random_init(const ObservationSet& obs, Index rank, std::uint64_t seed) {
  if (rank < 1) throw DomainError("rank must be positive");
  const std::vector<Index> ranks = feasible_ranks(obs.mode_sizes(), rank);
  return random_init(obs, ranks, seed);
}

}  // namespace ttgp
