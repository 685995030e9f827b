#include "memformer/harness/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace memformer {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
    if (classes == 0) {
        throw std::invalid_argument("confusion matrix needs at least one class");
    }
}

ConfusionMatrix::ConfusionMatrix(std::size_t classes, std::vector<std::size_t> counts)
    : classes_(classes), counts_(std::move(counts)) {
    if (classes == 0 || counts_.size() != classes * classes) {
        throw std::invalid_argument("confusion matrix needs " + std::to_string(classes * classes) + " counts, got " +
                                    std::to_string(counts_.size()));
    }
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
    if (truth >= classes_ || predicted >= classes_) {
        throw std::out_of_range("class index outside the confusion matrix");
    }
    ++counts_[truth * classes_ + predicted];
}

std::size_t ConfusionMatrix::total() const {
    std::size_t n = 0;
    for (auto c : counts_) {
        n += c;
    }
    return n;
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
    std::size_t n = 0;
    for (std::size_t p = 0; p < classes_; ++p) {
        n += at(truth, p);
    }
    return n;
}

std::size_t ConfusionMatrix::col_sum(std::size_t predicted) const {
    std::size_t n = 0;
    for (std::size_t t = 0; t < classes_; ++t) {
        n += at(t, predicted);
    }
    return n;
}

Metrics compute_metrics(const ConfusionMatrix& confusion) {
    const std::size_t total = confusion.total();
    if (total == 0) {
        throw std::invalid_argument("cannot compute metrics of an empty confusion matrix");
    }
    const std::size_t c = confusion.classes();
    Metrics m;
    m.per_class.assign(c, std::nan(""));
    // Integer numerators keep kappa exact up to the final division:
    // kappa = (N * trace - sum r_k c_k) / (N^2 - sum r_k c_k).
    std::size_t trace = 0;
    long double chance = 0.0L;
    double recall_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t k = 0; k < c; ++k) {
        trace += confusion.at(k, k);
        const std::size_t row = confusion.row_sum(k);
        chance += static_cast<long double>(row) * static_cast<long double>(confusion.col_sum(k));
        if (row > 0) {
            m.per_class[k] = static_cast<double>(confusion.at(k, k)) / static_cast<double>(row);
            recall_sum += m.per_class[k];
            ++present;
        }
    }
    const long double n = static_cast<long double>(total);
    m.oa = static_cast<double>(trace) / static_cast<double>(total);
    m.aa = recall_sum / static_cast<double>(present);
    const long double denominator = n * n - chance;
    m.kappa = denominator == 0.0L ? 1.0 : static_cast<double>((n * static_cast<long double>(trace) - chance) / denominator);
    return m;
}

}  // namespace memformer
