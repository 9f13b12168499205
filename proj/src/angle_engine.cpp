#include "betamix/angle_engine.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "betamix/errors.hpp"

namespace betamix {

DataMatrix::DataMatrix(std::size_t n, std::size_t p, std::vector<double> values,
                       std::vector<std::string> column_names)
    : n_(n), p_(p), values_(std::move(values)), names_(std::move(column_names)) {
  if (values_.size() != n_ * p_) throw InputError("data matrix size does not match its shape");
  if (names_.empty()) {
    names_.reserve(p_);
    for (std::size_t j = 0; j < p_; ++j) names_.push_back("V" + std::to_string(j + 1));
  }
  if (names_.size() != p_) throw InputError("column name count does not match column count");
}

NaPolicy parse_na_policy(const std::string& name) {
  if (name == "error") return NaPolicy::error;
  if (name == "drop_rows") return NaPolicy::drop_rows;
  if (name == "impute_zero") return NaPolicy::impute_zero;
  throw InputError("unknown NA policy '" + name + "'");
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    s = s.substr(1, s.size() - 2);
  }
  return std::string(s);
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    cells.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return cells;
}

bool is_na(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" || cell == "nan" || cell == "?";
}

bool parse_number(const std::string& cell, double& out) {
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  if (begin != end && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

DataMatrix read_matrix(std::istream& in, bool transpose, NaPolicy na_policy) {
  std::vector<std::pair<std::size_t, std::string>> lines;  // (1-based line number, text)
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (trim(line).empty()) continue;
    lines.emplace_back(lineno, line);
  }
  if (lines.size() < 2) throw InputError("input needs a header row and at least one data row");

  const char delim = lines.front().second.find('\t') != std::string::npos ? '\t' : ',';
  std::vector<std::string> header = split(lines.front().second, delim);

  std::vector<std::vector<std::string>> body;
  body.reserve(lines.size() - 1);
  for (std::size_t r = 1; r < lines.size(); ++r) body.push_back(split(lines[r].second, delim));

  // Row labels: blank first header cell, one extra body cell, or a
  // non-numeric first body cell.
  bool row_labels = false;
  if (body.front().size() == header.size() + 1) {
    row_labels = true;
    header.insert(header.begin(), std::string());
  } else if (!header.empty() && header.front().empty()) {
    row_labels = true;
  } else {
    double tmp = 0.0;
    const auto& first = body.front().front();
    row_labels = !is_na(first) && !parse_number(first, tmp);
  }

  const std::size_t first_col = row_labels ? 1 : 0;
  if (header.size() <= first_col) throw InputError("input has no numeric columns");
  const std::size_t ncols = header.size() - first_col;
  const std::size_t nrows = body.size();

  std::vector<double> table(nrows * ncols);  // row-major file order
  std::vector<bool> missing(nrows * ncols, false);
  std::vector<std::string> row_names;
  for (std::size_t r = 0; r < nrows; ++r) {
    const auto& cells = body[r];
    const std::size_t lineno = lines[r + 1].first;
    if (cells.size() != header.size()) {
      throw InputError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(cells.size()));
    }
    row_names.push_back(row_labels ? cells.front() : "R" + std::to_string(r + 1));
    for (std::size_t c = 0; c < ncols; ++c) {
      const std::string& cell = cells[c + first_col];
      double value = 0.0;
      if (is_na(cell)) {
        missing[r * ncols + c] = true;
      } else if (!parse_number(cell, value)) {
        throw InputError("line " + std::to_string(lineno) + ", column " + std::to_string(c + first_col + 1) +
                         ": cannot parse '" + cell + "' as a number");
      }
      table[r * ncols + c] = value;
    }
  }
  std::vector<std::string> col_names(header.begin() + static_cast<std::ptrdiff_t>(first_col), header.end());

  // Orient as samples x variables.
  const std::size_t n_all = transpose ? ncols : nrows;
  const std::size_t p = transpose ? nrows : ncols;
  auto at = [&](std::size_t sample, std::size_t var) {
    return transpose ? var * ncols + sample : sample * ncols + var;
  };
  auto where = [&](std::size_t sample, std::size_t var) {
    const std::size_t r = transpose ? var : sample;
    const std::size_t c = transpose ? sample : var;
    return "line " + std::to_string(lines[r + 1].first) + ", column " + std::to_string(c + first_col + 1);
  };

  std::vector<std::size_t> keep;
  for (std::size_t s = 0; s < n_all; ++s) {
    bool has_na = false;
    for (std::size_t v = 0; v < p; ++v) {
      if (!missing[at(s, v)]) continue;
      if (na_policy == NaPolicy::error) throw InputError(where(s, v) + ": missing value");
      has_na = true;
    }
    if (!(has_na && na_policy == NaPolicy::drop_rows)) keep.push_back(s);
  }

  const std::size_t n = keep.size();
  if (n < 3) throw InputError("need at least 3 samples, found " + std::to_string(n));
  if (p < 2) throw InputError("need at least 2 variables, found " + std::to_string(p));

  std::vector<double> values(n * p);
  for (std::size_t v = 0; v < p; ++v) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = at(keep[i], v);
      values[v * n + i] = missing[idx] ? 0.0 : table[idx];
    }
  }
  return DataMatrix(n, p, std::move(values), transpose ? std::move(row_names) : std::move(col_names));
}

DataMatrix ingest(const std::filesystem::path& path, bool transpose, NaPolicy na_policy) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return read_matrix(in, transpose, na_policy);
}

DataMatrix standardize(const DataMatrix& m, bool center) {
  DataMatrix out = m;
  std::vector<std::string> degenerate;
  for (std::size_t j = 0; j < m.p(); ++j) {
    auto col = out.column(j);
    double raw_sq = 0.0;
    for (double x : col) raw_sq += x * x;
    if (center) {
      double mean = 0.0;
      for (double x : col) mean += x;
      mean /= static_cast<double>(col.size());
      for (double& x : col) x -= mean;
    }
    double sq = 0.0;
    for (double x : col) sq += x * x;
    if (!(sq > 1e-24 * raw_sq) || sq == 0.0) {
      degenerate.push_back(m.column_names()[j]);
      continue;
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : col) x *= inv;
  }
  if (!degenerate.empty()) {
    std::string msg = "degenerate (constant or zero) columns:";
    for (const auto& name : degenerate) msg += " " + name;
    throw InputError(msg);
  }
  return out;
}

std::pair<std::size_t, std::size_t> PairIndex::pair(std::size_t j) const noexcept {
  // Solve for the row by the quadratic formula, then fix rounding.
  const double pd = static_cast<double>(p_);
  const double disc = (2.0 * pd - 1.0) * (2.0 * pd - 1.0) - 8.0 * static_cast<double>(j);
  auto i = static_cast<std::size_t>(std::max(0.0, std::floor((2.0 * pd - 1.0 - std::sqrt(std::max(0.0, disc))) / 2.0)));
  while (i > 0 && row_start(i) > j) --i;
  while (i + 2 < p_ && row_start(i + 1) <= j) ++i;
  return {i, j - row_start(i) + i + 1};
}

namespace {

double dot(const double* x, const double* y, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t t = 0;
  for (; t + 4 <= n; t += 4) {
    s0 += x[t] * y[t];
    s1 += x[t + 1] * y[t + 1];
    s2 += x[t + 2] * y[t + 2];
    s3 += x[t + 3] * y[t + 3];
  }
  for (; t < n; ++t) s0 += x[t] * y[t];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

ZVector pairwise_z(const DataMatrix& m, bool centered, PairwiseOptions options) {
  const std::size_t n = m.n();
  const std::size_t p = m.p();
  for (std::size_t j = 0; j < p; ++j) {
    const auto col = m.column(j);
    const double sq = dot(col.data(), col.data(), n);
    if (std::fabs(sq - 1.0) > 1e-8) {
      throw DomainError("pairwise_z requires unit-norm columns; column " + m.column_names()[j] + " is not");
    }
  }

  ZVector out;
  out.index = PairIndex(p);
  out.n_samples = n;
  out.centered = centered;
  out.z.resize(out.index.size());
  out.r.resize(out.index.size());

  const std::size_t bs = std::max<std::size_t>(1, options.block_size);
  const std::size_t nblocks = (p + bs - 1) / bs;
  std::vector<std::pair<std::size_t, std::size_t>> tiles;
  for (std::size_t bi = 0; bi < nblocks; ++bi) {
    for (std::size_t bk = bi; bk < nblocks; ++bk) tiles.emplace_back(bi, bk);
  }

  const double* data = m.values().data();
  const PairIndex& index = out.index;
  double* zs = out.z.data();
  double* rs = out.r.data();
  const auto ntiles = static_cast<std::ptrdiff_t>(tiles.size());

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t t = 0; t < ntiles; ++t) {
    const auto [bi, bk] = tiles[static_cast<std::size_t>(t)];
    const std::size_t i_end = std::min(p, (bi + 1) * bs);
    const std::size_t k_end = std::min(p, (bk + 1) * bs);
    for (std::size_t i = bi * bs; i < i_end; ++i) {
      const double* ci = data + i * n;
      for (std::size_t k = std::max(bk * bs, i + 1); k < k_end; ++k) {
        const double r = std::clamp(dot(ci, data + k * n, n), -1.0, 1.0);
        const std::size_t j = index.index(i, k);
        rs[j] = r;
        zs[j] = std::clamp(1.0 - r * r, kZClamp, 1.0 - kZClamp);
      }
    }
  }
  return out;
}

ZVector compute_z(const DataMatrix& raw, bool center, PairwiseOptions options) {
  return pairwise_z(standardize(raw, center), center, options);
}

}  // namespace betamix
