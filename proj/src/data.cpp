#include "tiltdid/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include "tiltdid/error.hpp"
#include "tiltdid/rng.hpp"

namespace tiltdid {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

bool parse_double(std::string_view field, double& value) {
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  return ec == std::errc() && ptr == end && std::isfinite(value);
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace

PanelDataset::PanelDataset(std::vector<double> y0, std::vector<double> y1, std::vector<double> a,
                           RowMatrix x, std::vector<std::string> covariate_names)
    : y0_(std::move(y0)), y1_(std::move(y1)), a_(std::move(a)), x_(std::move(x)),
      names_(std::move(covariate_names)) {
  const auto n = a_.size();
  if (y0_.size() != n || y1_.size() != n || static_cast<std::size_t>(x_.rows()) != n) {
    throw Error(Errc::invalid_argument, "panel columns have mismatched lengths");
  }
  if (names_.empty()) {
    for (Eigen::Index j = 0; j < x_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
  }
  if (names_.size() != static_cast<std::size_t>(x_.cols())) {
    throw Error(Errc::invalid_argument, "covariate name count does not match matrix width");
  }
  dy_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(a_[i] >= 0.0 && a_[i] <= 1.0)) {
      throw Error(Errc::treatment_out_of_range,
                  "treatment value outside [0,1] in row " + std::to_string(i + 1), i + 1, "a");
    }
    dy_[i] = y1_[i] - y0_[i];
    if (a_[i] > 0.0) ++n_treated_;
  }
  if (n_treated_ == 0 || n_treated_ == n) {
    throw Error(Errc::all_treated_or_all_untreated,
                "need both untreated (a == 0) and treated (a > 0) units");
  }
}

PanelDataset PanelDataset::without_covariates() const {
  return PanelDataset(y0_, y1_, a_, RowMatrix(size(), 0), {});
}

PanelDataset load_csv(const std::filesystem::path& path,
                      const std::vector<std::string>& covariate_columns) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::io_error, "empty file " + path.string());
  // UTF-8 byte order mark
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  std::vector<std::string> header;
  for (auto f : split_fields(line)) header.emplace_back(f);
  std::unordered_map<std::string, std::size_t> column_of;
  for (std::size_t j = 0; j < header.size(); ++j) column_of.emplace(header[j], j);

  auto require = [&](const std::string& name) {
    auto it = column_of.find(name);
    if (it == column_of.end()) throw Error(Errc::missing_column, "missing column '" + name + "'", 0, name);
    return it->second;
  };
  const auto c_y0 = require("y0");
  const auto c_y1 = require("y1");
  const auto c_a = require("a");

  std::vector<std::string> names = covariate_columns;
  if (names.empty()) {
    for (const auto& h : header) {
      if (h != "y0" && h != "y1" && h != "a") names.push_back(h);
    }
  }
  std::vector<std::size_t> c_x;
  for (const auto& name : names) c_x.push_back(require(name));

  std::vector<double> y0, y1, a;
  std::vector<double> xs;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw Error(Errc::non_numeric_value,
                  "row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(header.size()),
                  row);
    }
    auto numeric = [&](std::size_t col) {
      double v = 0.0;
      if (!parse_double(fields[col], v)) {
        throw Error(Errc::non_numeric_value,
                    "missing or non-numeric value in row " + std::to_string(row) + ", column '" +
                        header[col] + "'",
                    row, header[col]);
      }
      return v;
    };
    y0.push_back(numeric(c_y0));
    y1.push_back(numeric(c_y1));
    const double av = numeric(c_a);
    if (av < 0.0 || av > 1.0) {
      throw Error(Errc::treatment_out_of_range,
                  "treatment value outside [0,1] in row " + std::to_string(row), row, "a");
    }
    a.push_back(av);
    for (auto c : c_x) xs.push_back(numeric(c));
  }

  RowMatrix x(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(names.size()));
  std::copy(xs.begin(), xs.end(), x.data());
  return PanelDataset(std::move(y0), std::move(y1), std::move(a), std::move(x), std::move(names));
}

void write_csv(const PanelDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out << "y0,y1,a";
  for (const auto& name : data.covariate_names()) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << format_double(data.y0(i)) << ',' << format_double(data.y1(i)) << ','
        << format_double(data.a(i));
    for (std::size_t j = 0; j < data.num_covariates(); ++j) {
      out << ',' << format_double(data.covariates()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    out << '\n';
  }
}

std::vector<RowIndex> FoldAssignment::rows_in(int fold) const {
  std::vector<RowIndex> rows;
  for (std::size_t i = 0; i < fold_id.size(); ++i) {
    if (fold_id[i] == fold) rows.push_back(i);
  }
  return rows;
}

std::vector<RowIndex> FoldAssignment::rows_outside(int fold) const {
  std::vector<RowIndex> rows;
  for (std::size_t i = 0; i < fold_id.size(); ++i) {
    if (fold_id[i] != fold) rows.push_back(i);
  }
  return rows;
}

FoldAssignment assign_folds(const PanelDataset& data, int k, std::uint64_t seed) {
  if (k < 2) throw Error(Errc::invalid_argument, "fold count must be at least 2");
  std::vector<RowIndex> treated, untreated;
  for (std::size_t i = 0; i < data.size(); ++i) (data.treated(i) ? treated : untreated).push_back(i);
  const auto kk = static_cast<std::size_t>(k);
  if (treated.size() < kk || untreated.size() < kk) {
    throw Error(Errc::too_few_units_per_stratum,
                "need at least " + std::to_string(k) + " treated and untreated units, have " +
                    std::to_string(treated.size()) + " treated and " +
                    std::to_string(untreated.size()) + " untreated");
  }

  auto engine = make_engine(seed, StreamTag::folds);
  std::shuffle(treated.begin(), treated.end(), engine);
  std::shuffle(untreated.begin(), untreated.end(), engine);

  FoldAssignment folds;
  folds.k = k;
  folds.fold_id.assign(data.size(), -1);
  std::size_t next = 0;
  for (auto i : treated) folds.fold_id[i] = static_cast<int>(next++ % kk);
  for (auto i : untreated) folds.fold_id[i] = static_cast<int>(next++ % kk);
  return folds;
}

std::vector<RowIndex> all_rows(const PanelDataset& data) {
  std::vector<RowIndex> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

}  // namespace tiltdid
