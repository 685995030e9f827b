#pragma once

#include <cstddef>
#include <vector>

namespace memformer {

/// Square confusion matrix; rows are true classes, columns predictions.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes);
    ConfusionMatrix(std::size_t classes, std::vector<std::size_t> counts);

    std::size_t classes() const { return classes_; }
    std::size_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }
    void add(std::size_t truth, std::size_t predicted);
    std::size_t total() const;
    std::size_t row_sum(std::size_t truth) const;
    std::size_t col_sum(std::size_t predicted) const;
    const std::vector<std::size_t>& counts() const { return counts_; }

private:
    std::size_t classes_;
    std::vector<std::size_t> counts_;
};

struct Metrics {
    double oa = 0.0;
    double aa = 0.0;
    double kappa = 0.0;
    std::vector<double> per_class;  // recall; NaN for classes absent from the truth
};

/// OA = trace / total; AA = mean recall over classes present in the truth;
/// kappa = (p_o - p_e) / (1 - p_e) with p_e from the row/column marginals,
/// defined as 1 when p_e = 1 (a single class, always predicted correctly).
/// Kappa is evaluated on integer counts, (n * trace - sum r_i c_i) /
/// (n^2 - sum r_i c_i), so exact cases stay exact.
/// Throws std::invalid_argument on an empty matrix.
Metrics compute_metrics(const ConfusionMatrix& confusion);

}  // namespace memformer
