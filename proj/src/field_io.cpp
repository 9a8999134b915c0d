#include "clqg/field_io.hpp"

#include "clqg/hash.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace clqg {

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void i64(std::int64_t v) { le(static_cast<std::uint64_t>(v), 8); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
    void tag(const char* s) { buf_.append(s, 4); }
    void grid(const Grid& g) {
        for (Eigen::Index i = 0; i < g.size(); ++i) f64(g.data()[i]);
    }
    void checksum(std::size_t from) {
        Fnv1a h;
        h.update(buf_.data() + from, buf_.size() - from);
        u64(h.digest());
    }
    std::string& str() { return buf_; }

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& b, std::size_t pos) : b_(b), pos_(pos), start_(pos) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    std::int64_t i64() { return static_cast<std::int64_t>(le(8)); }
    double f64() { return std::bit_cast<double>(le(8)); }
    std::string tag() { return std::string(take(4), 4); }
    Grid grid(Eigen::Index ny, Eigen::Index nx) {
        Grid g(ny, nx);
        for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = f64();
        return g;
    }
    void verify(const char* what) {
        Fnv1a h;
        h.update(b_.data() + start_, pos_ - start_);
        const std::uint64_t expect = h.digest();
        if (u64() != expect) throw ChecksumError(std::string(what) + ": checksum mismatch (corrupted cache)");
    }
    std::size_t pos() const { return pos_; }

private:
    const char* take(std::size_t n) {
        if (pos_ + n > b_.size()) throw ChecksumError("field cache truncated");
        const char* p = b_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint64_t le(int n) {
        const auto* p = reinterpret_cast<const unsigned char*>(take(static_cast<std::size_t>(n)));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        return v;
    }
    const std::string& b_;
    std::size_t pos_;
    std::size_t start_;
};

void check_dims(std::int64_t nx, std::int64_t ny, std::size_t remaining) {
    if (nx < 1 || ny < 1 || static_cast<std::uint64_t>(nx) * static_cast<std::uint64_t>(ny) > remaining)
        throw ChecksumError("field cache: implausible grid dimensions");
}

}  // namespace

std::string encode_field(const FieldLadder& f) {
    if (!f.cov) throw DomainError("encode_field: field has no covariance model");
    Writer w;
    w.tag("CLQG");
    w.u32(kFieldCacheVersion);
    w.u32(static_cast<std::uint32_t>(f.spec.family));
    const auto params = f.spec.parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (double p : params) w.f64(p);
    w.i64(f.grid.nx);
    w.i64(f.grid.ny);
    w.f64(f.grid.x0);
    w.f64(f.grid.y0);
    w.f64(f.grid.dx);
    w.u32(static_cast<std::uint32_t>(f.depth()));
    for (double e : f.ladder.eps) w.f64(e);
    for (int j = 0; j <= f.depth(); ++j) {
        w.grid(f.X[static_cast<std::size_t>(j)]);
        w.grid(f.variance_grid(j));
    }
    w.u64(f.seed);
    w.u64(f.replica);
    w.u32(static_cast<std::uint32_t>(f.grid.boundary));
    for (const Stencil& s : f.cov->scales) {
        w.u8(s.stationary ? 1 : 0);
        if (s.stationary) {
            for (double v : {s.c00, s.c10, s.c01, s.c11, s.c1m}) w.f64(v);
        } else {
            w.grid(s.covx);
            w.grid(s.covy);
            w.grid(s.covd);
            w.grid(s.cova);
        }
    }
    w.u32(static_cast<std::uint32_t>(f.cov->clip_error.size()));
    for (std::size_t s = 0; s < f.cov->clip_error.size(); ++s) {
        w.f64(f.cov->clip_error[s]);
        w.u32(static_cast<std::uint32_t>(s < f.cov->padding.size() ? f.cov->padding[s] : 0));
    }
    w.checksum(0);
    return std::move(w.str());
}

FieldLadder decode_field(const std::string& bytes, std::size_t* consumed) {
    Reader r(bytes, 0);
    if (r.tag() != "CLQG") throw DomainError("not a field cache (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kFieldCacheVersion) throw DomainError("unsupported field cache version " + std::to_string(version));
    FieldLadder f;
    const auto family = static_cast<KernelFamily>(r.u32());
    const std::uint32_t np = r.u32();
    if (np > 1024) throw ChecksumError("field cache: implausible parameter count");
    std::vector<double> params(np);
    for (auto& p : params) p = r.f64();
    const std::int64_t nx = r.i64(), ny = r.i64();
    check_dims(nx, ny, bytes.size());
    f.grid.nx = nx;
    f.grid.ny = ny;
    f.grid.x0 = r.f64();
    f.grid.y0 = r.f64();
    f.grid.dx = r.f64();
    const std::uint32_t depth = r.u32();
    if (depth > 64) throw ChecksumError("field cache: implausible depth");
    f.ladder.eps.resize(depth + 1);
    for (auto& e : f.ladder.eps) e = r.f64();
    std::vector<Grid> var(depth + 1);
    for (std::uint32_t j = 0; j <= depth; ++j) {
        f.X.push_back(r.grid(ny, nx));
        var[j] = r.grid(ny, nx);
    }
    f.seed = r.u64();
    f.replica = r.u64();
    f.grid.boundary = static_cast<Boundary>(r.u32());
    auto cov = std::make_shared<CovarianceModel>();
    for (std::uint32_t j = 0; j <= depth; ++j) {
        Stencil s;
        s.stationary = r.u8() != 0;
        if (s.stationary) {
            s.c00 = r.f64();
            s.c10 = r.f64();
            s.c01 = r.f64();
            s.c11 = r.f64();
            s.c1m = r.f64();
        } else {
            s.var = std::move(var[j]);
            s.covx = r.grid(ny, nx);
            s.covy = r.grid(ny, nx);
            s.covd = r.grid(ny, nx);
            s.cova = r.grid(ny, nx);
        }
        cov->scales.push_back(std::move(s));
    }
    const std::uint32_t shells = r.u32();
    if (shells > 64) throw ChecksumError("field cache: implausible shell count");
    for (std::uint32_t s = 0; s < shells; ++s) {
        cov->clip_error.push_back(r.f64());
        cov->padding.push_back(static_cast<int>(r.u32()));
    }
    r.verify("field cache");
    f.spec = KernelSpec::from_parameters(family, params);
    f.cov = std::move(cov);
    if (consumed) *consumed = r.pos();
    return f;
}

std::string encode_measure(const GridMeasure& m) {
    Writer w;
    w.tag("MEAS");
    w.u32(static_cast<std::uint32_t>(m.kind));
    w.u32(static_cast<std::uint32_t>(static_cast<std::int32_t>(m.scale)));
    w.f64(m.beta);
    w.i64(m.grid.nx);
    w.i64(m.grid.ny);
    w.grid(m.mass);
    w.checksum(0);
    return std::move(w.str());
}

GridMeasure decode_measure(const std::string& bytes, std::size_t offset, const GridSpec& grid, std::size_t* consumed) {
    Reader r(bytes, offset);
    if (r.tag() != "MEAS") throw ChecksumError("measure block: bad tag");
    GridMeasure m;
    m.kind = static_cast<MeasureKind>(r.u32());
    m.scale = static_cast<std::int32_t>(r.u32());
    m.beta = r.f64();
    const std::int64_t nx = r.i64(), ny = r.i64();
    if (nx != grid.nx || ny != grid.ny) throw ChecksumError("measure block: grid does not match the field");
    m.grid = grid;
    m.mass = r.grid(ny, nx);
    r.verify("measure block");
    if (consumed) *consumed = r.pos() - offset;
    return m;
}

void save_field_cache(const std::filesystem::path& file, const FieldLadder& field) {
    const std::string bytes = encode_field(field);
    const auto tmp = file.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ResourceError("cannot write " + tmp);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw ResourceError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, file);
}

void append_measure_block(const std::filesystem::path& file, const GridMeasure& m) {
    const std::string bytes = encode_measure(m);
    std::ofstream os(file, std::ios::binary | std::ios::app);
    if (!os) throw ResourceError("cannot append to " + file.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

FieldCache load_field_cache(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw DomainError("cannot open field cache " + file.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    const std::string bytes = ss.str();
    FieldCache c;
    std::size_t pos = 0;
    c.field = decode_field(bytes, &pos);
    while (pos < bytes.size()) {
        std::size_t n = 0;
        GridMeasure m = decode_measure(bytes, pos, c.field.grid, &n);
        m.seed = c.field.seed;
        m.replica = c.field.replica;
        c.measures.push_back(std::move(m));
        pos += n;
    }
    return c;
}

}  // namespace clqg
