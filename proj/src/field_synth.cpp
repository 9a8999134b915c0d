#include "clqg/field_synth.hpp"

#include "clqg/rng.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace clqg {

namespace {

std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

template <typename T>
using FftwPtr = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwPtr<T> fftw_alloc(std::size_t n) {
    T* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
    if (!p) throw ResourceError("fftw_malloc failed");
    return FftwPtr<T>(p);
}

struct PlanDeleter {
    void operator()(fftw_plan_s* p) const {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        fftw_destroy_plan(p);
    }
};
using PlanPtr = std::unique_ptr<fftw_plan_s, PlanDeleter>;

constexpr double kCoordTol = 1e-9;

// Field grids are large and short-lived. With glibc's dynamic mmap threshold,
// small long-lived allocations made between replicas pin freed grids inside
// the heap and memory grows per replica. A fixed threshold (largest allowed)
// keeps grids on the heap, where they are reused.
void fix_mmap_threshold() {
#if defined(__GLIBC__)
    static std::once_flag once;
    std::call_once(once, [] { mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024); });
#endif
}

}  // namespace

ScaleLadder ScaleLadder::dyadic(int depth) {
    if (depth < 1) throw DomainError("ScaleLadder: depth must be >= 1");
    ScaleLadder l;
    for (int j = 0; j <= depth; ++j) l.eps.push_back(std::ldexp(1.0, -j));
    return l;
}

GridSpec GridSpec::unit_square(Eigen::Index n) {
    GridSpec g;
    g.nx = g.ny = n;
    g.dx = 1.0 / static_cast<double>(n);
    return g;
}

Rect GridSpec::domain() const {
    const Rect e = extent();
    if (boundary == Boundary::Hull) return {e.x0 + 0.5 * dx, e.y0 + 0.5 * dx, e.x1 - 0.5 * dx, e.y1 - 0.5 * dx};
    return e;
}

bool try_locate(const GridSpec& g, const Point& p, Interp& it) {
    double fx = (p.x() - g.x0) / g.dx - 0.5;
    double fy = (p.y() - g.y0) / g.dx - 0.5;
    const double nxd = static_cast<double>(g.nx), nyd = static_cast<double>(g.ny);
    Eigen::Index ix, iy;
    double u = 0.0, v = 0.0;
    it.simple = true;
    it.sign = {1.0, 1.0, 1.0, 1.0};
    switch (g.boundary) {
        case Boundary::Periodic: {
            fx -= nxd * std::floor(fx / nxd);
            fy -= nyd * std::floor(fy / nyd);
            ix = std::min(static_cast<Eigen::Index>(fx), g.nx - 1);
            iy = std::min(static_cast<Eigen::Index>(fy), g.ny - 1);
            u = fx - static_cast<double>(ix);
            v = fy - static_cast<double>(iy);
            const Eigen::Index ix1 = ix + 1 == g.nx ? 0 : ix + 1;
            const Eigen::Index iy1 = iy + 1 == g.ny ? 0 : iy + 1;
            it.ix = {ix, ix1, ix, ix1};
            it.iy = {iy, iy, iy1, iy1};
            break;
        }
        case Boundary::Hull: {
            if (!(fx >= -kCoordTol && fx <= nxd - 1.0 + kCoordTol && fy >= -kCoordTol && fy <= nyd - 1.0 + kCoordTol))
                return false;
            fx = std::clamp(fx, 0.0, nxd - 1.0);
            fy = std::clamp(fy, 0.0, nyd - 1.0);
            ix = std::min(static_cast<Eigen::Index>(fx), g.nx - 2);
            iy = std::min(static_cast<Eigen::Index>(fy), g.ny - 2);
            u = fx - static_cast<double>(ix);
            v = fy - static_cast<double>(iy);
            it.ix = {ix, ix + 1, ix, ix + 1};
            it.iy = {iy, iy, iy + 1, iy + 1};
            break;
        }
        case Boundary::OddReflection: {
            if (!(fx >= -0.5 - kCoordTol && fx <= nxd - 0.5 + kCoordTol && fy >= -0.5 - kCoordTol &&
                  fy <= nyd - 0.5 + kCoordTol))
                return false;
            fx = std::clamp(fx, -0.5, nxd - 0.5);
            fy = std::clamp(fy, -0.5, nyd - 0.5);
            ix = std::clamp(static_cast<Eigen::Index>(std::floor(fx)), Eigen::Index{-1}, g.nx - 1);
            iy = std::clamp(static_cast<Eigen::Index>(std::floor(fy)), Eigen::Index{-1}, g.ny - 1);
            u = fx - static_cast<double>(ix);
            v = fy - static_cast<double>(iy);
            std::array<Eigen::Index, 2> xs{ix, ix + 1}, ys{iy, iy + 1};
            std::array<double, 2> sx{1.0, 1.0}, sy{1.0, 1.0};
            for (int k = 0; k < 2; ++k) {
                if (xs[k] < 0) { xs[k] = 0; sx[k] = -1.0; it.simple = false; }
                if (xs[k] >= g.nx) { xs[k] = g.nx - 1; sx[k] = -1.0; it.simple = false; }
                if (ys[k] < 0) { ys[k] = 0; sy[k] = -1.0; it.simple = false; }
                if (ys[k] >= g.ny) { ys[k] = g.ny - 1; sy[k] = -1.0; it.simple = false; }
            }
            it.ix = {xs[0], xs[1], xs[0], xs[1]};
            it.iy = {ys[0], ys[0], ys[1], ys[1]};
            it.sign = {sx[0] * sy[0], sx[1] * sy[0], sx[0] * sy[1], sx[1] * sy[1]};
            break;
        }
    }
    it.w = {(1.0 - u) * (1.0 - v), u * (1.0 - v), (1.0 - u) * v, u * v};
    return true;
}

Interp locate(const GridSpec& g, const Point& p) {
    Interp it;
    if (!try_locate(g, p, it)) {
        std::ostringstream os;
        os << "point (" << p.x() << ", " << p.y() << ") outside the grid domain";
        throw DomainError(os.str());
    }
    return it;
}

double Stencil::cov(const GridSpec& g, Eigen::Index ax, Eigen::Index ay, Eigen::Index bx, Eigen::Index by) const {
    Eigen::Index dx = bx - ax, dy = by - ay;
    if (g.boundary == Boundary::Periodic) {
        if (dx == g.nx - 1) dx = -1;
        if (dx == 1 - g.nx) dx = 1;
        if (dy == g.ny - 1) dy = -1;
        if (dy == 1 - g.ny) dy = 1;
    }
    if (dx < 0 || (dx == 0 && dy < 0)) {
        std::swap(ax, bx);
        std::swap(ay, by);
        dx = -dx;
        dy = -dy;
    }
    if (stationary) {
        if (dx == 0 && dy == 0) return c00;
        if (dx == 1 && dy == 0) return c10;
        if (dx == 0 && dy == 1) return c01;
        if (dx == 1 && dy == 1) return c11;
        return c1m;
    }
    if (dx == 0 && dy == 0) return var(ay, ax);
    if (dx == 1 && dy == 0) return covx(ay, ax);
    if (dx == 0 && dy == 1) return covy(ay, ax);
    if (dx == 1 && dy == 1) return covd(ay, ax);
    // (1,-1): cell with lower-left node (ax, by)
    return cova(by, ax);
}

double Stencil::interpolated_variance(const GridSpec& g, const Interp& it) const {
    const auto& w = it.w;
    if (stationary && it.simple) {
        return c00 * (w[0] * w[0] + w[1] * w[1] + w[2] * w[2] + w[3] * w[3]) +
               2.0 * (c10 * (w[0] * w[1] + w[2] * w[3]) + c01 * (w[0] * w[2] + w[1] * w[3]) + c11 * w[0] * w[3] +
                      c1m * w[1] * w[2]);
    }
    double s = 0.0;
    for (int a = 0; a < 4; ++a) {
        if (w[a] == 0.0) continue;
        for (int b = 0; b < 4; ++b) {
            if (w[b] == 0.0) continue;
            s += w[a] * w[b] * it.sign[a] * it.sign[b] * cov(g, it.ix[a], it.iy[a], it.ix[b], it.iy[b]);
        }
    }
    return std::max(s, 0.0);
}

Grid FieldLadder::variance_grid(int j) const {
    const Stencil& s = stencil(j);
    if (!s.stationary) return s.var;
    return Grid::Constant(grid.ny, grid.nx, s.c00);
}

// ---------------------------------------------------------------------------

struct FieldSynthesizer::Impl {
    KernelSpec spec;
    GridSpec window;
    GridSpec out_grid;
    ScaleLadder ladder;
    SynthesisOptions options;
    std::shared_ptr<CovarianceModel> cov;

    // stationary (torus) plan
    Eigen::Index tx = 0, ty = 0;  // torus size
    std::vector<std::vector<double>> sqrt_lambda;  // per shell, ty * (tx/2+1)
    PlanPtr c2r;

    // GFF plan
    std::vector<std::vector<double>> gff_amp;  // per shell incl. base (index 0), ny * nx
    PlanPtr r2r;

    void build_stationary();
    void build_gff();
    FieldLadder sample(std::uint64_t seed, std::uint64_t replica) const;
};

namespace {

double mff_shell_covariance(double m, double eps_hi, double eps_lo, double r) {
    if (r == 0.0) return std::log(eps_hi / eps_lo);
    const double a = m * r / eps_hi, b = m * r / eps_lo;
    const double ka = a > 700.0 ? 0.0 : boost::math::cyl_bessel_k(0, a);
    const double kb = b > 700.0 ? 0.0 : boost::math::cyl_bessel_k(0, b);
    return ka - kb;
}

}  // namespace

void FieldSynthesizer::Impl::build_stationary() {
    const Eigen::Index nx = window.nx, ny = window.ny;
    const int shells = ladder.depth();
    const double dx = window.dx;
    std::string failure;
    for (int pad = options.initial_padding; pad <= options.max_padding; pad *= 2) {
        tx = pad * nx;
        ty = pad * ny;
        const Eigen::Index hx = tx / 2 + 1;
        const std::size_t nreal = static_cast<std::size_t>(tx * ty);
        const std::size_t nhalf = static_cast<std::size_t>(ty * hx);
        const double ntot = static_cast<double>(nreal);
        auto cbuf = fftw_alloc<double>(nreal);
        auto spec_buf = fftw_alloc<fftw_complex>(nhalf);
        auto rbuf = fftw_alloc<double>(nreal);
        PlanPtr fwd, bwd;
        {
            std::lock_guard<std::mutex> lock(fftw_planner_mutex());
            fwd.reset(fftw_plan_dft_r2c_2d(static_cast<int>(ty), static_cast<int>(tx), cbuf.get(), spec_buf.get(),
                                           FFTW_ESTIMATE));
            bwd.reset(fftw_plan_dft_c2r_2d(static_cast<int>(ty), static_cast<int>(tx), spec_buf.get(), rbuf.get(),
                                           FFTW_ESTIMATE));
        }
        sqrt_lambda.assign(static_cast<std::size_t>(shells), {});
        cov->clip_error.assign(static_cast<std::size_t>(shells), 0.0);
        cov->padding.assign(static_cast<std::size_t>(shells), pad);
        std::vector<std::array<double, 5>> lags(static_cast<std::size_t>(shells));
        bool ok = true;
        for (int s = 0; s < shells && ok; ++s) {
            const double e_hi = ladder.eps[static_cast<std::size_t>(s)];
            const double e_lo = ladder.eps[static_cast<std::size_t>(s) + 1];
            std::vector<double> lam(nhalf);
            std::vector<double> target;
            if (spec.family == KernelFamily::MFF) {
                target.resize(nreal);
                for (Eigen::Index iy = 0; iy < ty; ++iy) {
                    const double ry = static_cast<double>(std::min(iy, ty - iy)) * dx;
                    for (Eigen::Index ix = 0; ix < tx; ++ix) {
                        const double rx = static_cast<double>(std::min(ix, tx - ix)) * dx;
                        const double c = mff_shell_covariance(spec.mass, e_hi, e_lo, std::hypot(rx, ry));
                        target[static_cast<std::size_t>(iy * tx + ix)] = c;
                    }
                }
                std::copy(target.begin(), target.end(), cbuf.get());
                fftw_execute(fwd.get());
                for (std::size_t k = 0; k < nhalf; ++k) lam[k] = spec_buf[k][0];
            } else {
                // Fourier white noise: annulus 1/e_hi <= |xi| < 1/e_lo of the torus frequency lattice.
                const double dkx = 2.0 * kPi / (static_cast<double>(tx) * dx);
                const double dky = 2.0 * kPi / (static_cast<double>(ty) * dx);
                for (Eigen::Index ky = 0; ky < ty; ++ky) {
                    const double fy = static_cast<double>(ky <= ty / 2 ? ky : ky - ty) * dky;
                    for (Eigen::Index kx = 0; kx < hx; ++kx) {
                        const double xi = std::hypot(static_cast<double>(kx) * dkx, fy);
                        double l = 0.0;
                        if (xi >= 1.0 / e_hi && xi < 1.0 / e_lo) l = ntot * spec.profile(xi) * dkx * dky / (2.0 * kPi);
                        lam[static_cast<std::size_t>(ky * hx + kx)] = l;
                    }
                }
            }
            // Clip and compute the realized covariance.
            for (std::size_t k = 0; k < nhalf; ++k) {
                spec_buf[k][0] = std::max(lam[k], 0.0) / ntot;
                spec_buf[k][1] = 0.0;
            }
            fftw_execute(bwd.get());
            double err = 0.0;
            if (!target.empty())
                for (std::size_t i = 0; i < nreal; ++i) err = std::max(err, std::abs(rbuf[i] - target[i]));
            cov->clip_error[static_cast<std::size_t>(s)] = err;
            if (err > options.clip_tolerance) {
                std::ostringstream os;
                os << "circulant embedding not positive definite at shell " << s << " (scale j=" << s + 1
                   << ", eps=" << e_lo << "): clipping error " << err << " exceeds " << options.clip_tolerance
                   << " at padding " << pad << "x";
                failure = os.str();
                ok = false;
                break;
            }
            auto at = [&](Eigen::Index ix, Eigen::Index iy) {
                return rbuf[static_cast<std::size_t>(((iy + ty) % ty) * tx + (ix + tx) % tx)];
            };
            lags[static_cast<std::size_t>(s)] = {at(0, 0), at(1, 0), at(0, 1), at(1, 1), at(1, -1)};
            auto& sl = sqrt_lambda[static_cast<std::size_t>(s)];
            sl.resize(nhalf);
            for (std::size_t k = 0; k < nhalf; ++k) sl[k] = std::sqrt(std::max(lam[k], 0.0) / ntot);
        }
        if (!ok) continue;
        cov->scales.assign(static_cast<std::size_t>(shells) + 1, Stencil{});
        for (int j = 1; j <= shells; ++j) {
            Stencil st = cov->scales[static_cast<std::size_t>(j) - 1];
            const auto& l = lags[static_cast<std::size_t>(j) - 1];
            st.c00 += l[0];
            st.c10 += l[1];
            st.c01 += l[2];
            st.c11 += l[3];
            st.c1m += l[4];
            cov->scales[static_cast<std::size_t>(j)] = st;
        }
        {
            auto in = fftw_alloc<fftw_complex>(nhalf);
            auto out = fftw_alloc<double>(nreal);
            std::lock_guard<std::mutex> lock(fftw_planner_mutex());
            c2r.reset(fftw_plan_dft_c2r_2d(static_cast<int>(ty), static_cast<int>(tx), in.get(), out.get(),
                                           FFTW_ESTIMATE));
        }
        out_grid = window;
        if (options.periodic) {
            out_grid.nx = tx;
            out_grid.ny = ty;
            out_grid.boundary = Boundary::Periodic;
        } else {
            out_grid.boundary = Boundary::Hull;
        }
        return;
    }
    throw SynthesisError(failure);
}

void FieldSynthesizer::Impl::build_gff() {
    const Rect& d = spec.domain;
    const Eigen::Index nx = window.nx, ny = window.ny;
    const double w = d.width(), h = d.height();
    if (std::abs(window.x0 - d.x0) > 1e-9 * w || std::abs(window.y0 - d.y0) > 1e-9 * h ||
        std::abs(static_cast<double>(nx) * window.dx - w) > 1e-9 * w ||
        std::abs(static_cast<double>(ny) * window.dx - h) > 1e-9 * h)
        throw DomainError("GFF grid must tile the Dirichlet domain exactly");
    out_grid = window;
    out_grid.boundary = Boundary::OddReflection;
    const int shells = ladder.depth();
    // Time ranges [t_lo, t_hi] of pi * int p_D: base [1, inf), shell s: [eps_{s+1}^2, eps_s^2].
    std::vector<std::pair<double, double>> ranges;
    ranges.emplace_back(1.0, std::numeric_limits<double>::infinity());
    for (int s = 0; s < shells; ++s) {
        const double a = ladder.eps[static_cast<std::size_t>(s)], b = ladder.eps[static_cast<std::size_t>(s) + 1];
        ranges.emplace_back(b * b, a * a);
    }
    auto aliases = [](Eigen::Index m, Eigen::Index n, double len, double t_min) {
        // modes k whose sine vectors on the n-cell grid coincide (up to sign) with mode m
        std::vector<double> ks;
        const double kmax = len * std::sqrt(80.0 / std::max(t_min, 1e-300)) / kPi + 2.0;
        if (m == n) {
            for (Eigen::Index k = n; static_cast<double>(k) <= kmax || k == n; k += 2 * n) ks.push_back(static_cast<double>(k));
        } else {
            for (Eigen::Index q = 0;; ++q) {
                const Eigen::Index k1 = 2 * n * q + m, k2 = 2 * n * (q + 1) - m;
                if (static_cast<double>(k1) > kmax && q > 0) break;
                ks.push_back(static_cast<double>(k1));
                if (static_cast<double>(k2) <= kmax) ks.push_back(static_cast<double>(k2));
            }
        }
        return ks;
    };
    const double norm = 4.0 / (w * h);
    const std::size_t ncell = static_cast<std::size_t>(nx * ny);

    Eigen::MatrixXd sx(nx, nx), qx(nx, nx), sy(ny, ny), qy(ny, ny);
    for (Eigen::Index i = 0; i < nx; ++i)
        for (Eigen::Index m = 1; m <= nx; ++m) {
            const double a = std::sin(static_cast<double>(m) * kPi * (static_cast<double>(i) + 0.5) / static_cast<double>(nx));
            const double b = std::sin(static_cast<double>(m) * kPi * (static_cast<double>(i) + 1.5) / static_cast<double>(nx));
            sx(i, m - 1) = a * a;
            qx(i, m - 1) = a * b;
        }
    for (Eigen::Index i = 0; i < ny; ++i)
        for (Eigen::Index m = 1; m <= ny; ++m) {
            const double a = std::sin(static_cast<double>(m) * kPi * (static_cast<double>(i) + 0.5) / static_cast<double>(ny));
            const double b = std::sin(static_cast<double>(m) * kPi * (static_cast<double>(i) + 1.5) / static_cast<double>(ny));
            sy(i, m - 1) = a * a;
            qy(i, m - 1) = a * b;
        }

    gff_amp.assign(ranges.size(), {});
    cov->scales.assign(static_cast<std::size_t>(shells) + 1, Stencil{});
    Eigen::MatrixXd vcum = Eigen::MatrixXd::Zero(ny, nx);
    for (std::size_t s = 0; s < ranges.size(); ++s) {
        const auto [t_lo, t_hi] = ranges[s];
        Eigen::MatrixXd v(ny, nx);
        for (Eigen::Index m1 = 1; m1 <= ny; ++m1) {
            const auto ky = aliases(m1, ny, h, t_lo);
            for (Eigen::Index m2 = 1; m2 <= nx; ++m2) {
                const auto kx = aliases(m2, nx, w, t_lo);
                double acc = 0.0;
                for (double k1 : ky)
                    for (double k2 : kx) {
                        const double mu = 0.5 * kPi * kPi * (k1 * k1 / (h * h) + k2 * k2 / (w * w));
                        const double hi = std::isinf(t_hi) ? 0.0 : std::exp(-mu * t_hi);
                        acc += kPi * (std::exp(-mu * t_lo) - hi) / mu;
                    }
                v(m1 - 1, m2 - 1) = norm * acc;
            }
        }
        auto& amp = gff_amp[s];
        amp.resize(ncell);
        for (Eigen::Index m1 = 1; m1 <= ny; ++m1)
            for (Eigen::Index m2 = 1; m2 <= nx; ++m2) {
                const double wgt = (m1 < ny ? 2.0 : 1.0) * (m2 < nx ? 2.0 : 1.0);
                amp[static_cast<std::size_t>((m1 - 1) * nx + (m2 - 1))] = std::sqrt(v(m1 - 1, m2 - 1)) / wgt;
            }
        // Variance tables of X_j (j = s) from the cumulative mode variances.
        vcum += v;
        Stencil st;
        st.stationary = false;
        const Eigen::MatrixXd left = sy * vcum;
        const Eigen::MatrixXd leftq = qy * vcum;
        st.var = (left * sx.transpose()).array();
        st.covx = (left * qx.transpose()).array();
        st.covy = (leftq * sx.transpose()).array();
        st.covd = (leftq * qx.transpose()).array();
        st.cova = st.covd;
        cov->scales[s] = std::move(st);
    }
    auto in = fftw_alloc<double>(ncell);
    auto out = fftw_alloc<double>(ncell);
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    r2r.reset(fftw_plan_r2r_2d(static_cast<int>(ny), static_cast<int>(nx), in.get(), out.get(), FFTW_RODFT01,
                               FFTW_RODFT01, FFTW_ESTIMATE));
}

FieldLadder FieldSynthesizer::Impl::sample(std::uint64_t seed, std::uint64_t replica) const {
    FieldLadder f;
    f.spec = spec;
    f.grid = out_grid;
    f.ladder = ladder;
    f.seed = seed;
    f.replica = replica;
    f.cov = cov;
    const int shells = ladder.depth();
    const Eigen::Index nx = out_grid.nx, ny = out_grid.ny;
    f.X.reserve(static_cast<std::size_t>(shells) + 1);

    if (spec.family == KernelFamily::GFF_DIRICHLET) {
        const std::size_t ncell = static_cast<std::size_t>(nx * ny);
        auto in = fftw_alloc<double>(ncell);
        auto out = fftw_alloc<double>(ncell);
        Grid acc = Grid::Zero(ny, nx);
        for (std::size_t s = 0; s < gff_amp.size(); ++s) {
            NormalStream g(seed, {replica, tag(StreamTag::Field), s});
            const auto& amp = gff_amp[s];
            for (std::size_t k = 0; k < ncell; ++k) in[k] = amp[k] * g();
            fftw_execute_r2r(r2r.get(), in.get(), out.get());
            acc += Eigen::Map<const Grid>(out.get(), ny, nx);
            f.X.push_back(acc);
        }
        return f;
    }

    const Eigen::Index hx = tx / 2 + 1;
    const std::size_t nhalf = static_cast<std::size_t>(ty * hx);
    const std::size_t nreal = static_cast<std::size_t>(tx * ty);
    auto in = fftw_alloc<fftw_complex>(nhalf);
    auto out = fftw_alloc<double>(nreal);
    Grid acc = Grid::Zero(ny, nx);
    f.X.push_back(acc);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int s = 0; s < shells; ++s) {
        NormalStream g(seed, {replica, tag(StreamTag::Field), static_cast<std::uint64_t>(s) + 1});
        const auto& sl = sqrt_lambda[static_cast<std::size_t>(s)];
        for (Eigen::Index ky = 0; ky < ty; ++ky) {
            for (Eigen::Index kx = 0; kx < hx; ++kx) {
                const std::size_t k = static_cast<std::size_t>(ky * hx + kx);
                const bool edge_col = kx == 0 || (kx == tx / 2);
                if (edge_col && ky > ty / 2) continue;  // filled from the mirror row
                if (edge_col && (ky == 0 || ky == ty / 2)) {
                    in[k][0] = sl[k] * g();
                    in[k][1] = 0.0;
                    continue;
                }
                const double re = g() * inv_sqrt2, im = g() * inv_sqrt2;
                in[k][0] = sl[k] * re;
                in[k][1] = sl[k] * im;
                if (edge_col) {
                    const std::size_t km = static_cast<std::size_t>((ty - ky) * hx + kx);
                    in[km][0] = sl[km] * re;
                    in[km][1] = -sl[km] * im;
                }
            }
        }
        fftw_execute_dft_c2r(c2r.get(), in.get(), out.get());
        const Eigen::Map<const Grid> torus(out.get(), ty, tx);
        acc += torus.topLeftCorner(ny, nx);
        f.X.push_back(acc);
    }
    return f;
}

FieldSynthesizer::FieldSynthesizer(const KernelSpec& spec, const GridSpec& window, const ScaleLadder& ladder,
                                   const SynthesisOptions& options)
    : impl_(std::make_unique<Impl>()) {
    fix_mmap_threshold();
    spec.validate();
    if (ladder.depth() < 1) throw DomainError("ladder depth must be >= 1");
    if (window.nx < 2 || window.ny < 2 || !(window.dx > 0.0)) throw DomainError("grid must have >= 2x2 cells");
    if (options.initial_padding < 1 || options.max_padding < options.initial_padding)
        throw DomainError("invalid padding options");
    impl_->spec = spec;
    impl_->window = window;
    impl_->ladder = ladder;
    impl_->options = options;
    impl_->cov = std::make_shared<CovarianceModel>();
    if (spec.family == KernelFamily::GFF_DIRICHLET)
        impl_->build_gff();
    else
        impl_->build_stationary();
}

FieldSynthesizer::~FieldSynthesizer() = default;
FieldSynthesizer::FieldSynthesizer(FieldSynthesizer&&) noexcept = default;
FieldSynthesizer& FieldSynthesizer::operator=(FieldSynthesizer&&) noexcept = default;

FieldLadder FieldSynthesizer::sample(std::uint64_t seed, std::uint64_t replica) const {
    return impl_->sample(seed, replica);
}
const GridSpec& FieldSynthesizer::grid() const { return impl_->out_grid; }
const ScaleLadder& FieldSynthesizer::ladder() const { return impl_->ladder; }
const KernelSpec& FieldSynthesizer::spec() const { return impl_->spec; }
std::shared_ptr<const CovarianceModel> FieldSynthesizer::covariance() const { return impl_->cov; }

FieldLadder sample_field_ladder(const KernelSpec& spec, const GridSpec& grid, const ScaleLadder& ladder,
                                std::uint64_t seed, const SynthesisOptions& options) {
    return FieldSynthesizer(spec, grid, ladder, options).sample(seed, 0);
}

double field_at(const FieldLadder& f, int j, const Point& p) {
    if (j < 0 || j > f.depth()) throw DomainError("field_at: scale index out of range");
    const Interp it = locate(f.grid, p);
    const Grid& x = f.X[static_cast<std::size_t>(j)];
    double s = 0.0;
    for (int a = 0; a < 4; ++a)
        if (it.w[a] != 0.0) s += it.w[a] * it.sign[a] * x(it.iy[a], it.ix[a]);
    return s;
}

double variance_at(const FieldLadder& f, int j, const Point& p) {
    if (j < 0 || j > f.depth()) throw DomainError("variance_at: scale index out of range");
    return f.stencil(j).interpolated_variance(f.grid, locate(f.grid, p));
}

double empirical_covariance(std::span<const FieldLadder> fields, int j, const Point& x, const Point& y) {
    if (fields.size() < 2) throw DomainError("empirical_covariance needs at least 2 replicas");
    const double n = static_cast<double>(fields.size());
    std::vector<double> a, b;
    a.reserve(fields.size());
    b.reserve(fields.size());
    for (const auto& f : fields) {
        a.push_back(field_at(f, j, x));
        b.push_back(field_at(f, j, y));
    }
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
    return s / (n - 1.0);
}

FieldLadder constant_field(const GridSpec& grid, const ScaleLadder& ladder, const std::vector<double>& values,
                           const std::vector<double>& variances) {
    const std::size_t n = static_cast<std::size_t>(ladder.depth()) + 1;
    if (values.size() != n || variances.size() != n) throw DomainError("constant_field: one value per scale required");
    FieldLadder f;
    f.spec = KernelSpec::mff(1.0);
    f.grid = grid;
    f.ladder = ladder;
    auto cov = std::make_shared<CovarianceModel>();
    for (std::size_t j = 0; j < n; ++j) {
        f.X.push_back(Grid::Constant(grid.ny, grid.nx, values[j]));
        Stencil st;
        st.c00 = st.c10 = st.c01 = st.c11 = st.c1m = variances[j];
        cov->scales.push_back(st);
    }
    f.cov = cov;
    return f;
}

}  // namespace clqg
