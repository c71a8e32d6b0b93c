#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace graphonomy::metrics {

// Exact integer confusion counts; rows are ground truth, columns predictions.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int num_classes);

    int num_classes() const { return k_; }
    std::uint64_t at(int truth, int predicted) const;
    std::uint64_t total() const;

    // counts[gt][pred] += 1 per pixel; integer-exact and order-independent.
    void accumulate(const std::vector<std::uint8_t>& predicted,
                    const std::vector<std::uint8_t>& ground_truth);

    void merge(const ConfusionMatrix& other);

private:
    int k_;
    std::vector<std::uint64_t> counts_;
};

struct MetricsOptions {
    bool iou_includes_background = true; // flag to exclude class 0 from mean IoU
    bool f1_foreground_only = true;      // average F-1 over foreground classes
};

struct MetricsReport {
    double pixel_accuracy = 0.0;
    double mean_accuracy = 0.0;
    double mean_iou = 0.0;
    double mean_f1 = 0.0;
    std::vector<double> accuracy; // per class; NaN when absent from ground truth
    std::vector<double> iou;
    std::vector<double> f1;
};

// Classes absent from the ground truth are excluded from the means. All
// ratios are computed in 64-bit floating point from exact integer counts.
MetricsReport compute(const ConfusionMatrix& cm, const MetricsOptions& options = {});

// Fraction of pixels where mapping(fine_pred) == coarse_pred.
double hierarchy_consistency(const std::vector<std::uint8_t>& fine_pred,
                             const std::vector<std::uint8_t>& coarse_pred,
                             const std::vector<int>& mapping);

void write_report_table(std::ostream& out, const MetricsReport& report,
                        const std::vector<std::string>& class_names);

// Machine-readable lines: metric<TAB>class<TAB>value. Aggregates use class
// "overall" (pixel accuracy) or "mean".
void write_report_machine(std::ostream& out, const MetricsReport& report,
                          const std::vector<std::string>& class_names);

} // namespace graphonomy::metrics
