#include "camc/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "camc/codec.hpp"
#include "camc/errors.hpp"
#include "camc/image_io.hpp"

namespace camc {

double psnr_from_mse(double mse) {
    if (!(mse >= 0.0)) throw NumericError("negative or NaN mse");
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double psnr(const Tensor& reference, const Tensor& test) { return psnr_from_mse(mse_255(reference, test)); }

namespace {

// Least-squares cubic in t = (psnr − centre) / half, returned low order first.
Eigen::Vector4d fit_cubic(const std::vector<RDPoint>& curve, double centre, double half) {
    const auto n = static_cast<Eigen::Index>(curve.size());
    Eigen::MatrixXd a(n, 4);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double t = (curve[static_cast<std::size_t>(i)].psnr_db - centre) / half;
        a(i, 0) = 1.0;
        a(i, 1) = t;
        a(i, 2) = t * t;
        a(i, 3) = t * t * t;
        b(i) = std::log(curve[static_cast<std::size_t>(i)].bpp);
    }
    return a.colPivHouseholderQr().solve(b);
}

double integrate(const Eigen::Vector4d& c, double t0, double t1) {
    auto prim = [&](double t) { return c(0) * t + c(1) * t * t / 2 + c(2) * t * t * t / 3 + c(3) * t * t * t * t / 4; };
    return prim(t1) - prim(t0);
}

void check_curve(const std::vector<RDPoint>& c, const char* which) {
    if (c.size() < 4) throw EvaluationError(std::string(which) + " curve needs at least 4 RD points");
    for (const auto& p : c)
        if (!(p.bpp > 0.0) || !std::isfinite(p.psnr_db))
            throw EvaluationError(std::string(which) + " curve has a non-positive rate or non-finite PSNR");
}

}  // namespace

double bd_rate(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test) {
    check_curve(anchor, "anchor");
    check_curve(test, "test");
    auto range = [](const std::vector<RDPoint>& c) {
        auto [lo, hi] = std::minmax_element(c.begin(), c.end(),
                                            [](const RDPoint& a, const RDPoint& b) { return a.psnr_db < b.psnr_db; });
        return std::pair{lo->psnr_db, hi->psnr_db};
    };
    const auto [a_lo, a_hi] = range(anchor);
    const auto [t_lo, t_hi] = range(test);
    const double lo = std::max(a_lo, t_lo), hi = std::min(a_hi, t_hi);
    if (!(hi > lo)) throw EvaluationError("RD curves have no overlapping PSNR interval");

    const double centre = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    const Eigen::Vector4d ca = fit_cubic(anchor, centre, half);
    const Eigen::Vector4d ct = fit_cubic(test, centre, half);
    // Over t ∈ [−1, 1]; dividing by the interval length 2 gives the mean gap.
    const double mean_diff = (integrate(ct, -1.0, 1.0) - integrate(ca, -1.0, 1.0)) / 2.0;
    return (std::exp(mean_diff) - 1.0) * 100.0;
}

EvalRow evaluate_image(const std::string& name, const Tensor& image, Model& model) {
    EncodeResult enc = encode_image(image, model);
    const Tensor decoded = image_to_tensor(tensor_to_image(decode_image(enc.file, model)));
    EvalRow row;
    row.name = name;
    row.height = image.dim(0);
    row.width = image.dim(1);
    row.file_bytes = enc.file.size();
    row.bpp = 8.0 * double(row.file_bytes) / double(row.height * row.width);
    row.psnr_db = psnr(image, decoded);
    return row;
}

EvalSummary evaluate_images(const std::vector<std::pair<std::string, Tensor>>& images, Model& model) {
    EvalSummary s;
    double bits = 0.0, pixels = 0.0, psnr_sum = 0.0;
    for (const auto& [name, img] : images) {
        s.rows.push_back(evaluate_image(name, img, model));
        const EvalRow& r = s.rows.back();
        bits += 8.0 * double(r.file_bytes);
        pixels += double(r.height * r.width);
        psnr_sum += r.psnr_db;
    }
    if (!s.rows.empty()) {
        s.mean_bpp = bits / pixels;
        s.mean_psnr = psnr_sum / double(s.rows.size());
    }
    return s;
}

std::vector<std::pair<std::string, Tensor>> load_image_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) throw InputError("'" + dir + "' is not a directory");
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw InputError("no .ppm images in '" + dir + "'");
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& p : paths) {
        Image img = read_pnm(p.string());
        if (img.channels != 3) throw InputError("'" + p.string() + "' is not a colour image");
        out.emplace_back(p.filename().string(), image_to_tensor(img));
    }
    return out;
}

std::string eval_csv(const EvalSummary& summary) {
    std::ostringstream o;
    o.setf(std::ios::fixed);
    o.precision(6);
    o << "image,height,width,bytes,bpp,psnr\n";
    std::size_t bytes = 0;
    for (const auto& r : summary.rows) {
        o << r.name << ',' << r.height << ',' << r.width << ',' << r.file_bytes << ',' << r.bpp << ',' << r.psnr_db
          << '\n';
        bytes += r.file_bytes;
    }
    o << "mean,,," << bytes << ',' << summary.mean_bpp << ',' << summary.mean_psnr << '\n';
    return o.str();
}

std::vector<RDPoint> read_rd_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::string line;
    std::vector<RDPoint> pts;
    int bpp_col = 0, psnr_col = 1;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (lineno == 1 && !cells.empty() && !std::isdigit(static_cast<unsigned char>(cells[0][0])) &&
            cells[0][0] != '.') {
            bpp_col = psnr_col = -1;
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (cells[i] == "bpp") bpp_col = static_cast<int>(i);
                if (cells[i] == "psnr" || cells[i] == "psnr_db") psnr_col = static_cast<int>(i);
            }
            if (bpp_col < 0 || psnr_col < 0) throw InputError("'" + path + "': header lacks bpp/psnr columns");
            continue;
        }
        if (!cells.empty() && cells[0] == "mean") continue;
        const auto need = static_cast<std::size_t>(std::max(bpp_col, psnr_col));
        if (cells.size() <= need) throw InputError("'" + path + "' line " + std::to_string(lineno) + ": too few columns");
        try {
            RDPoint p;
            p.bpp = std::stod(cells[static_cast<std::size_t>(bpp_col)]);
            p.psnr_db = std::stod(cells[static_cast<std::size_t>(psnr_col)]);
            pts.push_back(p);
        } catch (const std::exception&) {
            throw InputError("'" + path + "' line " + std::to_string(lineno) + ": not a number");
        }
    }
    return pts;
}

}  // namespace camc
