#include "graphonomy/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "graphonomy/errors.hpp"

namespace graphonomy::metrics {

ConfusionMatrix::ConfusionMatrix(int num_classes) : k_(num_classes) {
    if (num_classes <= 0)
        throw UsageError("confusion matrix needs a positive class count, got " +
                         std::to_string(num_classes));
    counts_.assign(static_cast<std::size_t>(k_) * static_cast<std::size_t>(k_), 0);
}

std::uint64_t ConfusionMatrix::at(int truth, int predicted) const {
    return counts_[static_cast<std::size_t>(truth) * static_cast<std::size_t>(k_) +
                   static_cast<std::size_t>(predicted)];
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
}

void ConfusionMatrix::accumulate(const std::vector<std::uint8_t>& predicted,
                                 const std::vector<std::uint8_t>& ground_truth) {
    if (predicted.size() != ground_truth.size())
        throw DataError("accumulate: prediction has " + std::to_string(predicted.size()) +
                        " pixels, ground truth " + std::to_string(ground_truth.size()));
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const int p = predicted[i];
        const int g = ground_truth[i];
        if (p >= k_ || g >= k_)
            throw DataError("accumulate: label value " + std::to_string(std::max(p, g)) +
                            " out of range for " + std::to_string(k_) + " classes at pixel " +
                            std::to_string(i));
        counts_[static_cast<std::size_t>(g) * static_cast<std::size_t>(k_) +
                static_cast<std::size_t>(p)]++;
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.k_ != k_)
        throw UsageError("merge: class counts differ, " + std::to_string(k_) + " vs " +
                         std::to_string(other.k_));
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

MetricsReport compute(const ConfusionMatrix& cm, const MetricsOptions& options) {
    const int k = cm.num_classes();
    const std::uint64_t total = cm.total();
    if (total == 0) throw UsageError("compute: empty confusion matrix");

    std::vector<std::uint64_t> row_sum(static_cast<std::size_t>(k), 0);
    std::vector<std::uint64_t> col_sum(static_cast<std::size_t>(k), 0);
    std::uint64_t diag = 0;
    for (int g = 0; g < k; ++g) {
        for (int p = 0; p < k; ++p) {
            const std::uint64_t c = cm.at(g, p);
            row_sum[static_cast<std::size_t>(g)] += c;
            col_sum[static_cast<std::size_t>(p)] += c;
        }
        diag += cm.at(g, g);
    }

    MetricsReport report;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    report.accuracy.assign(static_cast<std::size_t>(k), nan);
    report.iou.assign(static_cast<std::size_t>(k), nan);
    report.f1.assign(static_cast<std::size_t>(k), nan);
    report.pixel_accuracy = static_cast<double>(diag) / static_cast<double>(total);

    double acc_sum = 0.0, iou_sum = 0.0, f1_sum = 0.0;
    int acc_n = 0, iou_n = 0, f1_n = 0;
    for (int c = 0; c < k; ++c) {
        const std::uint64_t rs = row_sum[static_cast<std::size_t>(c)];
        if (rs == 0) continue; // absent from ground truth: excluded from means
        const std::uint64_t cs = col_sum[static_cast<std::size_t>(c)];
        const std::uint64_t d = cm.at(c, c);
        const double acc = static_cast<double>(d) / static_cast<double>(rs);
        const double iou = static_cast<double>(d) / static_cast<double>(rs + cs - d);
        const double f1 = 2.0 * static_cast<double>(d) / static_cast<double>(rs + cs);
        report.accuracy[static_cast<std::size_t>(c)] = acc;
        report.iou[static_cast<std::size_t>(c)] = iou;
        report.f1[static_cast<std::size_t>(c)] = f1;
        acc_sum += acc;
        ++acc_n;
        if (options.iou_includes_background || c != 0) {
            iou_sum += iou;
            ++iou_n;
        }
        if (!options.f1_foreground_only || c != 0) {
            f1_sum += f1;
            ++f1_n;
        }
    }
    report.mean_accuracy = acc_n ? acc_sum / acc_n : 0.0;
    report.mean_iou = iou_n ? iou_sum / iou_n : 0.0;
    report.mean_f1 = f1_n ? f1_sum / f1_n : 0.0;
    return report;
}

double hierarchy_consistency(const std::vector<std::uint8_t>& fine_pred,
                             const std::vector<std::uint8_t>& coarse_pred,
                             const std::vector<int>& mapping) {
    if (fine_pred.size() != coarse_pred.size())
        throw DataError("hierarchy_consistency: mask sizes differ, " +
                        std::to_string(fine_pred.size()) + " vs " +
                        std::to_string(coarse_pred.size()));
    if (fine_pred.empty()) throw UsageError("hierarchy_consistency: empty masks");
    std::uint64_t agree = 0;
    for (std::size_t i = 0; i < fine_pred.size(); ++i) {
        if (fine_pred[i] >= mapping.size())
            throw DataError("hierarchy_consistency: fine label " + std::to_string(fine_pred[i]) +
                            " outside mapping at pixel " + std::to_string(i));
        if (mapping[fine_pred[i]] == coarse_pred[i]) ++agree;
    }
    return static_cast<double>(agree) / static_cast<double>(fine_pred.size());
}

void write_report_table(std::ostream& out, const MetricsReport& report,
                        const std::vector<std::string>& class_names) {
    out << std::fixed << std::setprecision(4);
    out << "class                 acc      iou      f1\n";
    for (std::size_t c = 0; c < report.iou.size(); ++c) {
        const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
        out << std::left << std::setw(20) << name << std::right;
        if (std::isnan(report.iou[c])) {
            out << "   (absent)\n";
            continue;
        }
        out << " " << std::setw(8) << report.accuracy[c] << " " << std::setw(8) << report.iou[c]
            << " " << std::setw(8) << report.f1[c] << "\n";
    }
    out << "pixel_accuracy " << report.pixel_accuracy << "\n";
    out << "mean_accuracy  " << report.mean_accuracy << "\n";
    out << "mean_iou       " << report.mean_iou << "\n";
    out << "mean_f1        " << report.mean_f1 << "\n";
}

void write_report_machine(std::ostream& out, const MetricsReport& report,
                          const std::vector<std::string>& class_names) {
    out << std::setprecision(10);
    auto name = [&](std::size_t c) {
        return c < class_names.size() ? class_names[c] : std::to_string(c);
    };
    for (std::size_t c = 0; c < report.iou.size(); ++c) {
        if (std::isnan(report.iou[c])) continue;
        out << "accuracy\t" << name(c) << "\t" << report.accuracy[c] << "\n";
        out << "iou\t" << name(c) << "\t" << report.iou[c] << "\n";
        out << "f1\t" << name(c) << "\t" << report.f1[c] << "\n";
    }
    out << "pixel_accuracy\toverall\t" << report.pixel_accuracy << "\n";
    out << "mean_accuracy\tmean\t" << report.mean_accuracy << "\n";
    out << "mean_iou\tmean\t" << report.mean_iou << "\n";
    out << "mean_f1\tmean\t" << report.mean_f1 << "\n";
}

} // namespace graphonomy::metrics
