#include "perfseg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "perfseg/io.hpp"
#include <stdexcept>

namespace perfseg {

namespace {

void require_same_dims(const BinaryMask& a, const BinaryMask& b, const char* op) {
    if (!a.same_dims(b)) throw std::invalid_argument(std::string(op) + ": dims mismatch");
}

}  // namespace

double dice(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_dims(pred, gt, "dice");
    std::size_t inter = 0, a = 0, b = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
        inter += (p && g);
        a += p;
        b += g;
    }
    if (a + b == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

double mcc(const BinaryMask& pred, const BinaryMask& gt) {
    require_same_dims(pred, gt, "mcc");
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
        if (p && g) ++tp;
        else if (p && !g) ++fp;
        else if (!p && g) ++fn;
        else ++tn;
    }
    const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (denom == 0.0) return 0.0;
    return (tp * tn - fp * fn) / std::sqrt(denom);
}

double delta_v_ml(const BinaryMask& pred, const BinaryMask& gt,
                  const std::array<double, 3>& spacing_mm) {
    require_same_dims(pred, gt, "delta_v");
    return std::abs(mask_volume_ml(gt, spacing_mm) - mask_volume_ml(pred, spacing_mm));
}

MetricsReport aggregate(const std::vector<RunMetrics>& runs) {
    if (runs.empty()) throw std::invalid_argument("aggregate: no runs");

    std::vector<std::string> group_order;
    for (const RunMetrics& r : runs) {
        bool seen = false;
        for (const auto& g : group_order) seen = seen || g == r.group;
        if (!seen) group_order.push_back(r.group);
    }
    group_order.push_back("All");

    MetricsReport report;
    report.runs = runs;
    for (const std::string& g : group_order) {
        GroupAggregate agg;
        agg.group = g;
        double sd = 0, sm = 0, sv = 0;
        for (const RunMetrics& r : runs) {
            if (g != "All" && r.group != g) continue;
            ++agg.runs;
            sd += r.dice;
            sm += r.mcc;
            sv += r.delta_v_ml;
        }
        if (agg.runs == 0) continue;
        const double n = agg.runs;
        agg.mean_dice = sd / n;
        agg.mean_mcc = sm / n;
        agg.mean_delta_v = sv / n;
        double vd = 0, vm = 0, vv = 0;
        for (const RunMetrics& r : runs) {
            if (g != "All" && r.group != g) continue;
            vd += (r.dice - agg.mean_dice) * (r.dice - agg.mean_dice);
            vm += (r.mcc - agg.mean_mcc) * (r.mcc - agg.mean_mcc);
            vv += (r.delta_v_ml - agg.mean_delta_v) * (r.delta_v_ml - agg.mean_delta_v);
        }
        agg.std_dice = std::sqrt(vd / n);  // population std
        agg.std_mcc = std::sqrt(vm / n);
        agg.std_delta_v = std::sqrt(vv / n);
        report.groups.push_back(agg);
    }
    return report;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

void write_runs_csv(const std::vector<RunMetrics>& runs, const std::string& path) {
    ensure_parent_dir(path);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open csv for writing: " + path);
    out << "run_id,group,dice,mcc,delta_v_ml\n";
    for (const RunMetrics& r : runs)
        out << r.run_id << ',' << r.group << ',' << fmt(r.dice) << ',' << fmt(r.mcc) << ','
            << fmt(r.delta_v_ml) << '\n';
}

void write_aggregate_csv(const MetricsReport& report, const std::string& path) {
    ensure_parent_dir(path);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open csv for writing: " + path);
    out << "# std columns are population standard deviations\n";
    out << "group,runs,mean_dice,std_dice,mean_mcc,std_mcc,mean_delta_v_ml,std_delta_v_ml\n";
    for (const GroupAggregate& g : report.groups)
        out << g.group << ',' << g.runs << ',' << fmt(g.mean_dice) << ',' << fmt(g.std_dice)
            << ',' << fmt(g.mean_mcc) << ',' << fmt(g.std_mcc) << ',' << fmt(g.mean_delta_v)
            << ',' << fmt(g.std_delta_v) << '\n';
}

}  // namespace perfseg
