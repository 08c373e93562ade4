#include "rampmeter/csv_io.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>
#include <system_error>

namespace rampmeter::csv {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::string located(const std::string& path, size_t line, const std::string& msg) {
    return path + ":" + std::to_string(line) + ": " + msg;
}

bool needs_quoting(const std::string& s) {
    return s.find_first_of(",\"\n\r") != std::string::npos;
}

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

// Splits one logical CSV record; quoted fields may span lines, so the caller
// hands us the stream and we consume as many physical lines as needed.
std::vector<std::string> parse_record(const std::string& line, FILE* f,
                                      const std::string& path, size_t& lineno) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    std::string buf = line;
    size_t i = 0;
    while (true) {
        if (i == buf.size()) {
            if (!in_quotes) break;
            int c = std::fgetc(f);
            if (c == EOF) fail(located(path, lineno, "unterminated quoted field"));
            ++lineno;
            cur += '\n';
            buf.clear();
            i = 0;
            while (c != EOF && c != '\n') {
                if (c != '\r') buf += static_cast<char>(c);
                c = std::fgetc(f);
            }
            continue;
        }
        const char c = buf[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < buf.size() && buf[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            if (!cur.empty()) fail(located(path, lineno, "stray quote in field"));
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
        ++i;
    }
    fields.push_back(std::move(cur));
    return fields;
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        fail(where + ": not a number: '" + s + "'");
    return v;
}

int Table::column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

Table read_csv(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) fail(path + ": cannot open");
    Table t;
    size_t lineno = 0;
    std::string line;
    int c;
    bool have_line = false;
    auto flush_line = [&]() {
        ++lineno;
        if (lineno == 1) {
            t.header = parse_record(line, f, path, lineno);
        } else {
            auto fields = parse_record(line, f, path, lineno);
            if (fields.size() != t.header.size())
                fail(located(path, lineno,
                             "expected " + std::to_string(t.header.size()) +
                                 " fields, got " + std::to_string(fields.size())));
            t.rows.push_back(std::move(fields));
        }
        line.clear();
        have_line = false;
    };
    while ((c = std::fgetc(f)) != EOF) {
        if (c == '\n') {
            flush_line();
        } else if (c != '\r') {
            line += static_cast<char>(c);
            have_line = true;
        } else {
            have_line = true;
        }
    }
    if (have_line || !line.empty()) flush_line();
    std::fclose(f);
    if (t.header.empty()) fail(path + ": empty file");
    return t;
}

Writer::Writer(const std::string& path) : path_(path) {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) fail(path + ": cannot open for writing");
    f_ = f;
}

Writer::~Writer() {
    if (f_) std::fclose(static_cast<FILE*>(f_));
}

void Writer::header(const std::vector<std::string>& names) {
    for (const auto& n : names) cell(n);
    end_row();
}

void Writer::cell(const std::string& s) {
    FILE* f = static_cast<FILE*>(f_);
    if (!at_row_start_) std::fputc(',', f);
    const std::string out = needs_quoting(s) ? quoted(s) : s;
    std::fwrite(out.data(), 1, out.size(), f);
    at_row_start_ = false;
}

void Writer::cell(double v) { cell(format_double(v)); }

void Writer::cell_empty() {
    FILE* f = static_cast<FILE*>(f_);
    if (!at_row_start_) std::fputc(',', f);
    at_row_start_ = false;
}

void Writer::end_row() {
    std::fputc('\n', static_cast<FILE*>(f_));
    at_row_start_ = true;
}

double occupancy_to_density(double occ_percent, double l_eff_m, double lanes) {
    if (l_eff_m <= 0.0)
        throw std::invalid_argument("effective vehicle length must be positive");
    if (lanes <= 0.0) throw std::invalid_argument("lane count must be positive");
    return (occ_percent / 100.0) * (1000.0 / l_eff_m) / lanes;
}

DetectorSeries read_detector_csv(const std::string& path,
                                 const DetectorCsvOptions& opt) {
    const Table t = read_csv(path);
    const int ct = t.column("t");
    const int cd = t.column("density");
    const int co = t.column("occupancy");
    const int cv = t.column("speed");
    const int cs = t.column("station");
    if (ct < 0) fail(path + ": missing column 't'");
    if (cv < 0) fail(path + ": missing column 'speed'");
    if ((cd < 0) == (co < 0))
        fail(path + ": need exactly one of 'density' or 'occupancy'");

    DetectorSeries out;
    double last_density = 0.0, last_speed = 0.0;
    bool have_density = false, have_speed = false;
    int run_density = 0, run_speed = 0;

    for (size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const size_t lineno = i + 2;  // header is line 1
        DetectorSample s;
        s.t_s = parse_double(row[ct], path + ":" + std::to_string(lineno) + ": t");
        if (cs >= 0) s.station = row[cs];

        const std::string& rawq = (cd >= 0) ? row[cd] : row[co];
        bool row_ok = true;
        if (rawq.empty()) {
            if (have_density && run_density < opt.max_forward_fill) {
                s.density = last_density;
                ++run_density;
                ++out.filled_values;
            } else {
                row_ok = false;
            }
        } else {
            const double q = parse_double(
                rawq, path + ":" + std::to_string(lineno) +
                          ((cd >= 0) ? ": density" : ": occupancy"));
            s.density = (cd >= 0)
                            ? q
                            : occupancy_to_density(q, opt.l_eff_m, opt.lanes);
            run_density = 0;
            have_density = true;
            last_density = s.density;
        }

        if (row[cv].empty()) {
            if (have_speed && run_speed < opt.max_forward_fill) {
                s.speed = last_speed;
                ++run_speed;
                ++out.filled_values;
            } else {
                row_ok = false;
            }
        } else {
            s.speed = parse_double(row[cv], path + ":" + std::to_string(lineno) +
                                                ": speed");
            run_speed = 0;
            have_speed = true;
            last_speed = s.speed;
        }

        if (!row_ok) {
            ++out.dropped_rows;
            continue;
        }
        if (!out.samples.empty() && s.t_s <= out.samples.back().t_s)
            fail(located(path, lineno, "timestamps must be strictly increasing"));
        out.samples.push_back(std::move(s));
    }
    return out;
}

} // namespace rampmeter::csv
