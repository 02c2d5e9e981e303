#include "rwf/toolkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <tuple>

#include <zlib.h>

namespace rwf {

namespace {

std::uint32_t be32(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

void put_be32(std::string& s, std::uint32_t v) {
    s.push_back(static_cast<char>((v >> 24) & 0xff));
    s.push_back(static_cast<char>((v >> 16) & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
    s.push_back(static_cast<char>(v & 0xff));
}

std::vector<unsigned char> zlib_inflate(const unsigned char* src, std::size_t len) {
    std::vector<unsigned char> out;
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw FormatError("png: inflateInit failed");
    zs.next_in = const_cast<Bytef*>(src);
    zs.avail_in = static_cast<uInt>(len);
    unsigned char buf[1 << 15];
    int ret = Z_OK;
    do {
        zs.next_out = buf;
        zs.avail_out = sizeof buf;
        ret = inflate(&zs, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&zs);
            throw FormatError("png: corrupt compressed image data");
        }
        out.insert(out.end(), buf, buf + (sizeof buf - zs.avail_out));
    } while (ret != Z_STREAM_END);
    inflateEnd(&zs);
    return out;
}

std::string zlib_deflate(const unsigned char* src, std::size_t len) {
    z_stream zs{};
    if (deflateInit(&zs, Z_DEFAULT_COMPRESSION) != Z_OK)
        throw FormatError("png: deflateInit failed");
    zs.next_in = const_cast<Bytef*>(src);
    zs.avail_in = static_cast<uInt>(len);
    std::string out;
    unsigned char buf[1 << 15];
    int ret = Z_OK;
    do {
        zs.next_out = buf;
        zs.avail_out = sizeof buf;
        ret = deflate(&zs, Z_FINISH);
        out.append(reinterpret_cast<char*>(buf), sizeof buf - zs.avail_out);
    } while (ret != Z_STREAM_END);
    deflateEnd(&zs);
    return out;
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

} // namespace

Tensor load_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("png: cannot open " + path);
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (raw.size() < 8 || std::memcmp(raw.data(), sig, 8) != 0)
        throw FormatError("png: bad signature in " + path);

    std::size_t off = 8;
    int w = 0, h = 0, bit_depth = 0, color_type = 0, interlace = 0;
    bool have_ihdr = false;
    std::vector<unsigned char> idat;
    while (off + 8 <= raw.size()) {
        std::uint32_t len = be32(raw.data() + off);
        if (off + 12 + len > raw.size()) throw FormatError("png: truncated chunk in " + path);
        std::string type(reinterpret_cast<const char*>(raw.data() + off + 4), 4);
        const unsigned char* data = raw.data() + off + 8;
        if (type == "IHDR") {
            if (len != 13) throw FormatError("png: bad IHDR in " + path);
            w = static_cast<int>(be32(data));
            h = static_cast<int>(be32(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            interlace = data[12];
            have_ihdr = true;
        } else if (type == "IDAT") {
            idat.insert(idat.end(), data, data + len);
        } else if (type == "IEND") {
            break;
        }
        off += 12 + len;
    }
    if (!have_ihdr || idat.empty()) throw FormatError("png: missing IHDR/IDAT in " + path);
    if (bit_depth != 8 || color_type != 2)
        throw FormatError("png: only 8-bit RGB supported, got depth " +
                          std::to_string(bit_depth) + " color type " +
                          std::to_string(color_type) + " in " + path);
    if (interlace != 0) throw FormatError("png: interlaced images unsupported in " + path);
    if (w <= 0 || h <= 0) throw FormatError("png: empty image " + path);

    std::vector<unsigned char> decomp = zlib_inflate(idat.data(), idat.size());
    const int bpp = 3;
    std::size_t stride = static_cast<std::size_t>(w) * bpp;
    if (decomp.size() != static_cast<std::size_t>(h) * (stride + 1))
        throw FormatError("png: pixel data size mismatch in " + path);

    std::vector<unsigned char> pix(static_cast<std::size_t>(h) * stride);
    for (int y = 0; y < h; ++y) {
        int filter = decomp[static_cast<std::size_t>(y) * (stride + 1)];
        const unsigned char* src = decomp.data() + static_cast<std::size_t>(y) * (stride + 1) + 1;
        unsigned char* cur = pix.data() + static_cast<std::size_t>(y) * stride;
        const unsigned char* prev = y > 0 ? cur - stride : nullptr;
        for (std::size_t x = 0; x < stride; ++x) {
            int a = x >= bpp ? cur[x - bpp] : 0;
            int b = prev ? prev[x] : 0;
            int c = (prev && x >= bpp) ? prev[x - bpp] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw FormatError("png: unknown filter type in " + path);
            }
            cur[x] = static_cast<unsigned char>(v & 0xff);
        }
    }

    std::vector<double> data(static_cast<std::size_t>(3) * h * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch)
                data[(static_cast<std::size_t>(ch) * h + y) * w + x] =
                    pix[static_cast<std::size_t>(y) * stride + static_cast<std::size_t>(x) * 3 +
                        static_cast<std::size_t>(ch)] /
                    255.0;
    return Tensor::from_data({3, h, w}, std::move(data));
}

void save_image(const Tensor& t, const std::string& path) {
    if (t.rank() != 3 || t.dim(0) != 3)
        throw ShapeError("save_image: expected [3,h,w], got " + shape_str(t.shape()));
    int h = t.dim(1), w = t.dim(2);
    std::size_t stride = static_cast<std::size_t>(w) * 3;
    std::vector<unsigned char> scan(static_cast<std::size_t>(h) * (stride + 1));
    const double* p = t.data();
    for (int y = 0; y < h; ++y) {
        unsigned char* row = scan.data() + static_cast<std::size_t>(y) * (stride + 1);
        row[0] = 0;  // filter: none
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                double v = p[(static_cast<std::size_t>(ch) * h + y) * w + x];
                v = std::clamp(v, 0.0, 1.0);
                row[1 + static_cast<std::size_t>(x) * 3 + static_cast<std::size_t>(ch)] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
    }
    std::string idat = zlib_deflate(scan.data(), scan.size());

    std::string out;
    out.append("\x89PNG\r\n\x1a\n", 8);
    auto chunk = [&](const char* type, const std::string& body) {
        put_be32(out, static_cast<std::uint32_t>(body.size()));
        std::string tb = std::string(type) + body;
        out.append(tb);
        std::uint32_t crc = static_cast<std::uint32_t>(
            crc32(0L, reinterpret_cast<const Bytef*>(tb.data()), static_cast<uInt>(tb.size())));
        put_be32(out, crc);
    };
    std::string ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(w));
    put_be32(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // RGB
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // no interlace
    chunk("IHDR", ihdr);
    chunk("IDAT", idat);
    chunk("IEND", "");

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("png: cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("png: write failed for " + path);
}

double psnr(const Tensor& x, const Tensor& y) {
    if (x.shape() != y.shape())
        throw ShapeError("psnr: shape mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(y.shape()));
    double mse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x.data()[i] - y.data()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(x.size());
    if (mse <= 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double attn_distance_entry(const AttnEntry& e, int h, int w) {
    if (e.nq <= 0 || e.nk <= 0 || e.weights.size() != static_cast<std::size_t>(e.nq) * e.nk)
        throw DataError("attn_distance: malformed entry");
    double diag = std::sqrt(static_cast<double>(h) * h + static_cast<double>(w) * w);
    double acc = 0.0;
    for (int q = 0; q < e.nq; ++q) {
        double d = 0.0;
        for (int k = 0; k < e.nk; ++k) {
            double dy = e.q_coords[q].first - e.k_coords[k].first;
            double dx = e.q_coords[q].second - e.k_coords[k].second;
            d += e.weights[static_cast<std::size_t>(q) * e.nk + k] * std::sqrt(dy * dy + dx * dx);
        }
        acc += d;
    }
    return acc / e.nq / diag;
}

double attn_distance(const AttnRecord& rec, int h, int w) {
    if (rec.entries.empty()) throw DataError("attn_distance: empty record");
    double acc = 0.0;
    for (const auto& e : rec.entries) acc += attn_distance_entry(e, h, w);
    return acc / static_cast<double>(rec.entries.size());
}

void write_attn_csv(const AttnRecord& rec, int h, int w, const std::string& path) {
    if (rec.entries.empty()) throw DataError("write_attn_csv: empty record");
    std::vector<std::tuple<int, int, std::string, int>> keys;
    std::map<std::tuple<int, int, std::string, int>, std::pair<double, int>> acc;
    for (const auto& e : rec.entries) {
        auto key = std::make_tuple(e.scale, e.block, e.branch, e.head);
        auto it = acc.find(key);
        if (it == acc.end()) {
            keys.push_back(key);
            it = acc.emplace(key, std::make_pair(0.0, 0)).first;
        }
        it->second.first += attn_distance_entry(e, h, w);
        it->second.second += 1;
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw FormatError("write_attn_csv: cannot open " + path);
    f << "scale,block,branch,head,distance\n";
    char buf[64];
    double agg = 0.0;
    for (const auto& key : keys) {
        const auto& [sum, count] = acc.at(key);
        double d = sum / count;
        agg += d;
        std::snprintf(buf, sizeof buf, "%.17g", d);
        f << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ','
          << std::get<3>(key) << ',' << buf << '\n';
    }
    std::snprintf(buf, sizeof buf, "%.17g", agg / static_cast<double>(keys.size()));
    f << "ALL,ALL,ALL,ALL," << buf << '\n';
    if (!f) throw FormatError("write_attn_csv: write failed for " + path);
}

DatasetIndex index_dataset(const std::string& root) {
    namespace fs = std::filesystem;
    fs::path in_dir = fs::path(root) / "input";
    fs::path tg_dir = fs::path(root) / "target";
    if (!fs::is_directory(in_dir) || !fs::is_directory(tg_dir))
        throw DataError("index_dataset: " + root + " must contain input/ and target/");
    auto names = [](const fs::path& dir) {
        std::vector<std::string> out;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file()) out.push_back(e.path().filename().string());
        std::sort(out.begin(), out.end());
        return out;
    };
    std::vector<std::string> in_names = names(in_dir);
    std::vector<std::string> tg_names = names(tg_dir);
    std::vector<std::string> orphans;
    for (const auto& n : in_names)
        if (!std::binary_search(tg_names.begin(), tg_names.end(), n))
            orphans.push_back("input/" + n);
    for (const auto& n : tg_names)
        if (!std::binary_search(in_names.begin(), in_names.end(), n))
            orphans.push_back("target/" + n);
    if (!orphans.empty()) {
        std::string msg = "index_dataset: orphan files:";
        for (const auto& o : orphans) msg += " " + o;
        throw DataError(msg);
    }
    DatasetIndex idx;
    idx.root = root;
    for (const auto& n : in_names) {
        Tensor a = load_image((in_dir / n).string());
        Tensor b = load_image((tg_dir / n).string());
        if (a.shape() != b.shape())
            throw DataError("index_dataset: dimension mismatch for " + n + ": " +
                            shape_str(a.shape()) + " vs " + shape_str(b.shape()));
        idx.pairs.emplace_back((in_dir / n).string(), (tg_dir / n).string());
    }
    return idx;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("run config: bad boolean for " + key + ": " + v);
}

} // namespace

RunConfig parse_run_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("run config: line " + std::to_string(lineno) + " is not key=value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        try {
            if (key == "steps") cfg.steps = std::stoi(val);
            else if (key == "batch") cfg.batch = std::stoi(val);
            else if (key == "patch") cfg.patch = std::stoi(val);
            else if (key == "lr_start") cfg.lr_start = std::stod(val);
            else if (key == "lr_end") cfg.lr_end = std::stod(val);
            else if (key == "alpha") cfg.alpha = std::stod(val);
            else if (key == "lambda") cfg.lambda = std::stod(val);
            else if (key == "msr_enabled") cfg.msr_enabled = parse_bool(val, key);
            else if (key == "augment") cfg.augment = parse_bool(val, key);
            else if (key == "clip_norm") cfg.clip_norm = std::stod(val);
            else if (key == "ckpt_every") cfg.ckpt_every = std::stoi(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "preset") cfg.preset = val;
            else
                throw ConfigError("run config: unknown key '" + key + "' at line " +
                                  std::to_string(lineno));
        } catch (const std::invalid_argument&) {
            throw ConfigError("run config: bad value for " + key + ": " + val);
        } catch (const std::out_of_range&) {
            throw ConfigError("run config: value out of range for " + key + ": " + val);
        }
    }
    if (cfg.preset != "desk" && cfg.preset != "rwf_t" && cfg.preset != "rwf_s" &&
        cfg.preset != "rwf_b")
        throw ConfigError("run config: unknown preset '" + cfg.preset + "'");
    return cfg;
}

RunConfig parse_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("run config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_run_config_text(text);
}

} // namespace rwf
