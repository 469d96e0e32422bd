#pragma once

#include "analysis.hpp"
#include "beamline.hpp"
#include "distribution.hpp"
#include "dynamics.hpp"
#include "errors.hpp"
#include "fluid.hpp"
#include "tensor.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace lorentzavg {

// Shortest text that reads back to the same double.
inline std::string format_number(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_number(const std::string& s)
{
    if (s == "nan") return std::nan("");
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    double v = 0.0;
    const char* first = s.data();
    if (!s.empty() && s.front() == '+') ++first;
    const auto res = std::from_chars(first, s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) throw DomainError("not a number: '" + s + "'");
    return v;
}

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& os) : os_(os) {}

    CsvWriter& header(const std::vector<std::string>& names)
    {
        columns_ = names.size();
        write(names);
        return *this;
    }

    // Each cell is either a number or text; an empty string leaves the cell blank.
    struct Cell {
        Cell(double v) : text(format_number(v)) {}
        Cell(int v) : text(std::to_string(v)) {}
        Cell(std::size_t v) : text(std::to_string(v)) {}
        Cell(std::string s) : text(std::move(s)) {}
        Cell(const char* s) : text(s) {}
        std::string text;
    };

    CsvWriter& row(const std::vector<Cell>& cells)
    {
        if (columns_ && cells.size() != columns_) throw DomainError("csv row width differs from header");
        std::vector<std::string> text;
        text.reserve(cells.size());
        for (const auto& c : cells) text.push_back(c.text);
        write(text);
        return *this;
    }

private:
    void write(const std::vector<std::string>& fields)
    {
        for (std::size_t k = 0; k < fields.size(); ++k) os_ << (k ? "," : "") << fields[k];
        os_ << '\n';
    }

    std::ostream& os_;
    std::size_t columns_ = 0;
};

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

// ------------------------------------------------------------ ensembles

inline void write_ensemble_csv(std::ostream& os, const Ensemble& ens, double t = 0.0, bool header = true)
{
    CsvWriter w(os);
    if (header) w.header({"t", "x0", "x1", "x2", "x3", "y0", "y1", "y2", "y3", "w"});
    for (const auto& s : ens.samples)
        w.row({t, s.x[0], s.x[1], s.x[2], s.x[3], s.y[0], s.y[1], s.y[2], s.y[3], s.w});
}

inline Ensemble read_ensemble_csv(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line)) throw DomainError("ensemble csv: missing header");
    const auto head = split_csv_line(line);
    const std::vector<std::string> expected{"t", "x0", "x1", "x2", "x3", "y0", "y1", "y2", "y3", "w"};
    if (head != expected) throw DomainError("ensemble csv: header must be t,x0..x3,y0..y3,w");
    Ensemble ens;
    ens.generator = "csv";
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != expected.size())
            throw DomainError("ensemble csv: line " + std::to_string(lineno) + " has the wrong number of fields");
        PhaseSample s;
        for (int k = 0; k < 4; ++k) {
            s.x[k] = parse_number(f[1 + k]);
            s.y[k] = parse_number(f[5 + k]);
        }
        s.w = parse_number(f[9]);
        ens.params["t"] = parse_number(f[0]);
        ens.samples.push_back(s);
    }
    return ens;
}

// ------------------------------------------------------------ trajectories

inline void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& rec,
                                 const Metric& metric = Metric::minkowski())
{
    CsvWriter w(os);
    w.header({"s", "param_kind", "x0", "x1", "x2", "x3", "y0", "y1", "y2", "y3", "eta_yy"});
    const std::string kind = param_name(rec.param);
    for (const auto& st : rec.states)
        w.row({st.s, kind, st.x[0], st.x[1], st.x[2], st.x[3], st.y[0], st.y[1], st.y[2], st.y[3],
               metric.square(st.y)});
}

inline void write_comparison_csv(std::ostream& os, const ComparisonReport& r)
{
    CsvWriter w(os);
    w.header({"t", "position_separation", "velocity_separation", "position_bound", "velocity_bound", "theta_gap",
              "dlog_energy", "averaged_norm"});
    for (std::size_t k = 0; k < r.times.size(); ++k)
        w.row({r.times[k], r.position_separation[k], r.velocity_separation[k], r.position_bound[k],
               r.velocity_bound[k], r.theta_gap[k], r.dlog_energy[k], r.averaged_norm[k]});
}

// ------------------------------------------------------------ fluid

// One row per occupied cell of every slice. The residual and its bound are
// only defined at the probed cell, the tube middle of the central slice; other
// rows leave those two columns blank.
inline void write_fluid_csv(std::ostream& os, const FluidCheckReport& r)
{
    CsvWriter w(os);
    w.header({"t", "cell", "x0", "x1", "x2", "x3", "V0", "V1", "V2", "V3", "eta_VV", "residual_norm", "bound_rhs"});
    const std::size_t probe_slice = r.slices.size() / 2;
    for (std::size_t s = 0; s < r.slices.size(); ++s) {
        const auto& sl = r.slices[s];
        const int m = sl.grid.middle();
        const int probe_cell = sl.grid.index(m, m, m);
        for (int c = 0; c < static_cast<int>(sl.cells.size()); ++c) {
            const auto& cell = sl.cells[c];
            if (!cell.occupied) continue;
            const bool probed = s == probe_slice && c == probe_cell;
            const Vec4& V = cell.V();
            w.row({sl.t, c, cell.position[0], cell.position[1], cell.position[2], cell.position[3], V[0], V[1], V[2],
                   V[3], cell.eta_VV, probed ? CsvWriter::Cell(r.lorentz.residual) : CsvWriter::Cell(""),
                   probed ? CsvWriter::Cell(r.lorentz.bound) : CsvWriter::Cell("")});
        }
    }
}

// ------------------------------------------------------------ beam optics

inline void write_beamline_csv(std::ostream& os, const JacobiRecord& rec)
{
    CsvWriter w(os);
    w.header({"tau", "xi0", "xi1", "xi2", "xi3", "xip0", "xip1", "xip2", "xip3"});
    for (const auto& s : rec.states)
        w.row({s.tau, s.xi[0], s.xi[1], s.xi[2], s.xi[3], s.xip[0], s.xip[1], s.xip[2], s.xip[3]});
}

inline void write_offset_csv(std::ostream& os, const OffsetReport& r)
{
    CsvWriter w(os);
    w.header({"tau", "off1", "off3"});
    for (std::size_t k = 0; k < r.tau.size(); ++k) w.row({r.tau[k], r.off1[k], r.off3[k]});
}

// Plain-text 4x4x4 table: one block per upper index, rows j, columns k.
inline void write_coeff_table(std::ostream& os, const Coeffs& c, const Vec4& x)
{
    os << "# Gamma^i_jk at x = (" << format_number(x[0]) << ", " << format_number(x[1]) << ", "
       << format_number(x[2]) << ", " << format_number(x[3]) << ")\n";
    for (int i = 0; i < 4; ++i) {
        os << "i = " << i << '\n';
        for (int j = 0; j < 4; ++j) {
            for (int k = 0; k < 4; ++k) os << (k ? " " : "") << format_number(c(i, j, k));
            os << '\n';
        }
    }
}

// ------------------------------------------------------------ plot data

// Two whitespace-separated columns under a "# xname yname" header; an empty
// series leaves just the header.
inline void write_series(std::ostream& os, const std::string& xname, const std::string& yname,
                         const std::vector<double>& xs, const std::vector<double>& ys)
{
    if (xs.size() != ys.size()) throw DomainError("plot series: column lengths differ");
    os << "# " << xname << ' ' << yname << '\n';
    for (std::size_t k = 0; k < xs.size(); ++k) os << format_number(xs[k]) << ' ' << format_number(ys[k]) << '\n';
}

inline void write_loglog_series(std::ostream& os, const std::string& xname, const std::string& yname,
                                const std::vector<std::pair<double, double>>& sweep)
{
    std::vector<double> lx, ly;
    for (const auto& [x, y] : sweep) {
        if (!(x > 0.0) || !(y > 0.0)) throw DomainError("log-log series needs positive values");
        lx.push_back(std::log(x));
        ly.push_back(std::log(y));
    }
    write_series(os, "log_" + xname, "log_" + yname, lx, ly);
}

} // namespace lorentzavg
