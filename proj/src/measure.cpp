#include "clqg/measure.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace clqg {

namespace {

void require_scale(const FieldLadder& f, int j, int min_j) {
    if (j < min_j || j > f.depth()) throw DomainError("measure: scale index out of range");
}

GridMeasure make(const FieldLadder& f, MeasureKind kind, int j, double beta) {
    GridMeasure m;
    m.kind = kind;
    m.scale = j;
    m.beta = beta;
    m.grid = f.grid;
    m.seed = f.seed;
    m.replica = f.replica;
    m.mass.resize(f.grid.ny, f.grid.nx);
    return m;
}

template <typename Fn>
void fill(GridMeasure& m, const FieldLadder& f, int j, Fn&& fn) {
    const Grid& x = f.X[static_cast<std::size_t>(j)];
    const Stencil& st = f.stencil(j);
    const double area = f.grid.cell_area();
    for (Eigen::Index iy = 0; iy < f.grid.ny; ++iy)
        for (Eigen::Index ix = 0; ix < f.grid.nx; ++ix)
            m.mass(iy, ix) = area * fn(x(iy, ix), st.variance(ix, iy), ix, iy);
}

}  // namespace

const char* to_string(MeasureKind k) {
    switch (k) {
        case MeasureKind::SENETA_HEYDE: return "seneta_heyde";
        case MeasureKind::DERIVATIVE: return "derivative";
        case MeasureKind::TRUNCATED: return "truncated";
        case MeasureKind::CUSTOM: return "custom";
    }
    return "unknown";
}

GridMeasure seneta_heyde_measure(const FieldLadder& f, int j) {
    require_scale(f, j, 1);
    GridMeasure m = make(f, MeasureKind::SENETA_HEYDE, j, 0.0);
    fill(m, f, j, [](double x, double s, Eigen::Index, Eigen::Index) { return std::sqrt(s) * std::exp(2.0 * x - 2.0 * s); });
    return m;
}

GridMeasure derivative_measure(const FieldLadder& f, int j) {
    require_scale(f, j, 1);
    GridMeasure m = make(f, MeasureKind::DERIVATIVE, j, 0.0);
    fill(m, f, j, [](double x, double s, Eigen::Index, Eigen::Index) { return (2.0 * s - x) * std::exp(2.0 * x - 2.0 * s); });
    return m;
}

GridMeasure raw_measure(const FieldLadder& f, int j) {
    require_scale(f, j, 0);
    GridMeasure m = make(f, MeasureKind::CUSTOM, j, 0.0);
    fill(m, f, j, [](double x, double s, Eigen::Index, Eigen::Index) { return std::exp(2.0 * x - 2.0 * s); });
    return m;
}

GridArray<std::uint8_t> barrier_grid(const FieldLadder& f, int j, double beta) {
    require_scale(f, j, 0);
    Grid running = Grid::Constant(f.grid.ny, f.grid.nx, -std::numeric_limits<double>::infinity());
    for (int i = 0; i <= j; ++i) {
        const Stencil& st = f.stencil(i);
        const Grid& x = f.X[static_cast<std::size_t>(i)];
        if (st.stationary)
            running = running.max(x - 2.0 * st.c00);
        else
            running = running.max(x - 2.0 * st.var);
    }
    return (running <= beta).cast<std::uint8_t>();
}

GridMeasure truncated_measure(const FieldLadder& f, int j, double beta) {
    require_scale(f, j, 0);
    if (!(beta >= 0.0)) throw DomainError("truncated_measure: beta must be >= 0");
    GridMeasure m = make(f, MeasureKind::TRUNCATED, j, beta);
    const auto ok = barrier_grid(f, j, beta);
    fill(m, f, j, [&](double x, double s, Eigen::Index ix, Eigen::Index iy) {
        if (!ok(iy, ix)) return 0.0;
        return std::max(2.0 * s - x + beta, 0.0) * std::exp(2.0 * x - 2.0 * s);
    });
    return m;
}

GridMeasure lebesgue_measure(const GridSpec& grid) {
    GridMeasure m;
    m.kind = MeasureKind::CUSTOM;
    m.grid = grid;
    m.mass = Grid::Constant(grid.ny, grid.nx, grid.cell_area());
    return m;
}

double measure_of_ball(const GridMeasure& m, const Point& x, double r) {
    if (!(r > 0.0)) throw DomainError("measure_of_ball: r must be > 0");
    const GridSpec& g = m.grid;
    const bool periodic = g.boundary == Boundary::Periodic;
    const double lx = static_cast<double>(g.nx) * g.dx, ly = static_cast<double>(g.ny) * g.dx;
    if (!periodic) {
        const Rect e = g.extent();
        const double far_x = std::max(std::abs(x.x() - e.x0), std::abs(x.x() - e.x1));
        const double far_y = std::max(std::abs(x.y() - e.y0), std::abs(x.y() - e.y1));
        if (far_x * far_x + far_y * far_y <= r * r) return m.total();
    }
    // direct sum over the cells of the bounding box (all cells when the ball wraps)
    const double fx = (x.x() - g.x0) / g.dx - 0.5, fy = (x.y() - g.y0) / g.dx - 0.5, rr = r / g.dx;
    Eigen::Index ix0 = static_cast<Eigen::Index>(std::floor(fx - rr)), ix1 = static_cast<Eigen::Index>(std::ceil(fx + rr));
    Eigen::Index iy0 = static_cast<Eigen::Index>(std::floor(fy - rr)), iy1 = static_cast<Eigen::Index>(std::ceil(fy + rr));
    if (!periodic || ix1 - ix0 + 1 >= g.nx || iy1 - iy0 + 1 >= g.ny) {
        ix0 = std::max<Eigen::Index>(ix0, 0);
        iy0 = std::max<Eigen::Index>(iy0, 0);
        ix1 = std::min(ix1, g.nx - 1);
        iy1 = std::min(iy1, g.ny - 1);
        if (periodic) ix0 = iy0 = 0, ix1 = g.nx - 1, iy1 = g.ny - 1;
    }
    double s = 0.0;
    for (Eigen::Index iy = iy0; iy <= iy1; ++iy)
        for (Eigen::Index ix = ix0; ix <= ix1; ++ix) {
            const Eigen::Index cx = ((ix % g.nx) + g.nx) % g.nx, cy = ((iy % g.ny) + g.ny) % g.ny;
            const Point c = g.center(cx, cy);
            double dx = std::abs(c.x() - x.x()), dy = std::abs(c.y() - x.y());
            if (periodic) {
                dx = std::fmod(dx, lx);
                dy = std::fmod(dy, ly);
                dx = std::min(dx, lx - dx);
                dy = std::min(dy, ly - dy);
            }
            if (dx * dx + dy * dy <= r * r) s += m.mass(cy, cx);
        }
    return s;
}

BallIndex::BallIndex(const GridMeasure& m) : grid_(m.grid), total_(m.total()) {
    prefix_.resize(grid_.ny, grid_.nx + 1);
    for (Eigen::Index iy = 0; iy < grid_.ny; ++iy) {
        double s = 0.0;
        prefix_(iy, 0) = 0.0;
        for (Eigen::Index ix = 0; ix < grid_.nx; ++ix) {
            s += m.mass(iy, ix);
            prefix_(iy, ix + 1) = s;
        }
    }
}

double BallIndex::operator()(const Point& x, double r) const {
    const GridSpec& g = grid_;
    const bool periodic = g.boundary == Boundary::Periodic;
    const double h = g.dx;
    // cell centre coordinates c_i = x0 + (i + 1/2) h; |c - x| <= r
    const double fy = (x.y() - g.y0) / h - 0.5;
    const double ry = r / h;
    if (!periodic) {
        const Rect e = g.extent();
        const double far_x = std::max(std::abs(x.x() - e.x0), std::abs(x.x() - e.x1));
        const double far_y = std::max(std::abs(x.y() - e.y0), std::abs(x.y() - e.y1));
        if (far_x * far_x + far_y * far_y <= r * r) return total_;
    }
    Eigen::Index iy_lo = static_cast<Eigen::Index>(std::ceil(fy - ry - 1e-12));
    Eigen::Index iy_hi = static_cast<Eigen::Index>(std::floor(fy + ry + 1e-12));
    if (!periodic) {
        iy_lo = std::max<Eigen::Index>(iy_lo, 0);
        iy_hi = std::min<Eigen::Index>(iy_hi, g.ny - 1);
    } else if (2.0 * r >= static_cast<double>(std::min(g.nx, g.ny)) * h) {
        // ball reaches around the torus: minimal-image distances cell by cell
        const double lx = static_cast<double>(g.nx) * h, ly = static_cast<double>(g.ny) * h;
        double s = 0.0;
        for (Eigen::Index iy = 0; iy < g.ny; ++iy)
            for (Eigen::Index ix = 0; ix < g.nx; ++ix) {
                const Point c = g.center(ix, iy);
                double dx = std::abs(c.x() - x.x()), dy = std::abs(c.y() - x.y());
                dx = std::fmod(dx, lx);
                dy = std::fmod(dy, ly);
                dx = std::min(dx, lx - dx);
                dy = std::min(dy, ly - dy);
                if (dx * dx + dy * dy <= r * r) s += prefix_(iy, ix + 1) - prefix_(iy, ix);
            }
        return s;
    }
    const double fx = (x.x() - g.x0) / h - 0.5;
    double sum = 0.0;
    auto row_sum = [&](Eigen::Index row, Eigen::Index a, Eigen::Index b) {
        // inclusive column range [a, b], wrapped on periodic grids
        if (a > b) return 0.0;
        if (!periodic) {
            a = std::max<Eigen::Index>(a, 0);
            b = std::min<Eigen::Index>(b, g.nx - 1);
            return a > b ? 0.0 : prefix_(row, b + 1) - prefix_(row, a);
        }
        if (b - a + 1 >= g.nx) return prefix_(row, g.nx);
        Eigen::Index aw = a % g.nx;
        if (aw < 0) aw += g.nx;
        const Eigen::Index len = b - a + 1;
        if (aw + len <= g.nx) return prefix_(row, aw + len) - prefix_(row, aw);
        return (prefix_(row, g.nx) - prefix_(row, aw)) + prefix_(row, aw + len - g.nx);
    };
    for (Eigen::Index iy = iy_lo; iy <= iy_hi; ++iy) {
        const double dy = (static_cast<double>(iy) - fy) * h;
        const double rem = r * r - dy * dy;
        if (rem < 0.0) continue;
        const double half = std::sqrt(rem) / h;
        const Eigen::Index a = static_cast<Eigen::Index>(std::ceil(fx - half - 1e-12));
        const Eigen::Index b = static_cast<Eigen::Index>(std::floor(fx + half + 1e-12));
        const Eigen::Index row = periodic ? ((iy % g.ny) + g.ny) % g.ny : iy;
        sum += row_sum(row, a, b);
    }
    return sum;
}

void write_measure_csv(std::ostream& os, const GridMeasure& m) {
    os << "cell,x,y,mass\n" << std::setprecision(17);
    for (Eigen::Index iy = 0; iy < m.grid.ny; ++iy)
        for (Eigen::Index ix = 0; ix < m.grid.nx; ++ix) {
            const Point c = m.grid.center(ix, iy);
            os << iy * m.grid.nx + ix << ',' << c.x() << ',' << c.y() << ',' << m.mass(iy, ix) << '\n';
        }
}

}  // namespace clqg
