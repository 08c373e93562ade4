#pragma once

#include <optional>
#include <string>
#include <vector>

namespace rampmeter::csv {

// RFC-style CSV: header row, comma separator, double-quote escaping, UTF-8,
// dot decimal separator. Numbers are written in shortest round-trip form so
// write -> read is bit-exact.

std::string format_double(double v);
double parse_double(const std::string& s, const std::string& where);

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 if absent
};

Table read_csv(const std::string& path);

class Writer {
public:
    explicit Writer(const std::string& path);
    ~Writer();

    void header(const std::vector<std::string>& names);
    void cell(const std::string& s);
    void cell(double v);
    void cell_empty();
    void end_row();

private:
    void* f_;
    bool at_row_start_ = true;
    std::string path_;
};

// (occ/100) * (1000/l_eff_m) / lanes, lanes = 1 for per-lane feeds
double occupancy_to_density(double occ_percent, double l_eff_m, double lanes = 1.0);

struct DetectorSample {
    double t_s = 0.0;
    double density = 0.0;  // veh/km/lane
    double speed = 0.0;    // km/h
    std::string station;
};

struct DetectorCsvOptions {
    double l_eff_m = 7.0;      // occupancy conversion
    double lanes = 1.0;        // aggregation divisor for occupancy feeds
    int max_forward_fill = 3;  // consecutive missing values carried forward
};

struct DetectorSeries {
    std::vector<DetectorSample> samples;
    long filled_values = 0;
    long dropped_rows = 0;  // gaps beyond the forward-fill limit
};

// Expects a header with column t plus speed and exactly one of
// density/occupancy; optional station. Missing numeric cells are forward
// filled up to max_forward_fill consecutive rows, longer gaps drop rows
// (downstream windows then reset on the time jump). Errors carry file/line.
DetectorSeries read_detector_csv(const std::string& path,
                                 const DetectorCsvOptions& opt);

} // namespace rampmeter::csv
