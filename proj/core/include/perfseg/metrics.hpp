#pragma once

#include <string>
#include <vector>

#include "perfseg/volume.hpp"

namespace perfseg {

/// 2|A n B| / (|A| + |B|); 1.0 when both masks are empty.
double dice(const BinaryMask& pred, const BinaryMask& gt);

/// Matthews correlation coefficient; 0.0 when any denominator factor is 0.
double mcc(const BinaryMask& pred, const BinaryMask& gt);

/// |V_gt - V_pred| in milliliters.
double delta_v_ml(const BinaryMask& pred, const BinaryMask& gt,
                  const std::array<double, 3>& spacing_mm);

struct RunMetrics {
    std::string run_id;
    std::string group;
    double dice = 0.0;
    double mcc = 0.0;
    double delta_v_ml = 0.0;
};

struct GroupAggregate {
    std::string group;
    int runs = 0;
    double mean_dice = 0.0, std_dice = 0.0;
    double mean_mcc = 0.0, std_mcc = 0.0;
    double mean_delta_v = 0.0, std_delta_v = 0.0;
};

struct MetricsReport {
    std::vector<RunMetrics> runs;
    std::vector<GroupAggregate> groups;  // per-group rows plus an "All" row
};

/// Population mean/std per metric per group; groups ordered by first
/// appearance, empty groups omitted, overall "All" row appended last.
MetricsReport aggregate(const std::vector<RunMetrics>& runs);

/// CSV: run_id,group,dice,mcc,delta_v_ml
void write_runs_csv(const std::vector<RunMetrics>& runs, const std::string& path);

/// CSV: group,runs,mean_dice,std_dice,mean_mcc,std_mcc,mean_delta_v_ml,std_delta_v_ml
/// (std columns are population standard deviations).
void write_aggregate_csv(const MetricsReport& report, const std::string& path);

}  // namespace perfseg
