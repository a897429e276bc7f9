#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tiltdid {

using RowIndex = std::size_t;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CovariateRow = Eigen::Ref<const Eigen::RowVectorXd>;

// Two-period panel: pre/post outcomes, mixture treatment a in [0,1] with an
// exact 0.0 meaning untreated, and an n x p covariate matrix (p may be 0).
// Immutable once constructed.
class PanelDataset {
 public:
  PanelDataset() = default;

  // Validates the treatment range and that both treated and untreated units
  // exist. Throws tiltdid::Error.
  PanelDataset(std::vector<double> y0, std::vector<double> y1, std::vector<double> a,
               RowMatrix x, std::vector<std::string> covariate_names = {});

  std::size_t size() const noexcept { return a_.size(); }
  std::size_t num_covariates() const noexcept { return static_cast<std::size_t>(x_.cols()); }

  double y0(RowIndex i) const { return y0_[i]; }
  double y1(RowIndex i) const { return y1_[i]; }
  double a(RowIndex i) const { return a_[i]; }
  double dy(RowIndex i) const { return dy_[i]; }
  bool treated(RowIndex i) const { return a_[i] > 0.0; }
  auto x(RowIndex i) const { return x_.row(static_cast<Eigen::Index>(i)); }

  std::span<const double> y0() const noexcept { return y0_; }
  std::span<const double> y1() const noexcept { return y1_; }
  std::span<const double> a() const noexcept { return a_; }
  std::span<const double> dy() const noexcept { return dy_; }
  const RowMatrix& covariates() const noexcept { return x_; }
  const std::vector<std::string>& covariate_names() const noexcept { return names_; }

  std::size_t treated_count() const noexcept { return n_treated_; }
  std::size_t untreated_count() const noexcept { return size() - n_treated_; }

  // Same units with the covariate columns dropped.
  PanelDataset without_covariates() const;

 private:
  std::vector<double> y0_, y1_, a_, dy_;
  RowMatrix x_;
  std::vector<std::string> names_;
  std::size_t n_treated_ = 0;
};

// Header required; columns y0, y1, a plus the named covariates, in any order.
// An empty covariate list selects every other column.
PanelDataset load_csv(const std::filesystem::path& path,
                      const std::vector<std::string>& covariate_columns = {});

// Shortest round-trip formatting, so reloading is bit-identical.
void write_csv(const PanelDataset& data, const std::filesystem::path& path);

struct FoldAssignment {
  std::vector<int> fold_id;
  int k = 0;

  std::vector<RowIndex> rows_in(int fold) const;
  std::vector<RowIndex> rows_outside(int fold) const;
};

// Stratified partition: treated and untreated units are shuffled separately and
// dealt round-robin, untreated dealing continues where the treated left off.
FoldAssignment assign_folds(const PanelDataset& data, int k, std::uint64_t seed);

std::vector<RowIndex> all_rows(const PanelDataset& data);

}  // namespace tiltdid
