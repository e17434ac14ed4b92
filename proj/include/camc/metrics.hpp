#pragma once

#include <string>
#include <vector>

#include "camc/entropy_model.hpp"
#include "camc/model.hpp"
#include "camc/tensor.hpp"

namespace camc {

inline constexpr double kPsnrCap = 99.0;

// 10·log10(255² / mse) for 255-scale mse, capped at kPsnrCap.
double psnr_from_mse(double mse_255);
// Inputs in [0, 1].
double psnr(const Tensor& reference, const Tensor& test);

// Bjøntegaard delta rate of `test` against `anchor`, in percent: cubic fits
// of ln(rate) over PSNR, integrated over the common PSNR interval. Needs at
// least four points per curve; EvaluationError if the PSNR ranges do not overlap.
double bd_rate(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test);

struct EvalRow {
    std::string name;
    std::size_t height = 0, width = 0;
    std::size_t file_bytes = 0;
    double bpp = 0.0;
    double psnr_db = 0.0;
};

struct EvalSummary {
    std::vector<EvalRow> rows;
    double mean_bpp = 0.0;   // total bits / total pixels
    double mean_psnr = 0.0;  // arithmetic mean over images
};

// Encodes and decodes every image; bpp comes from the coded file size and
// PSNR from the decoded 8-bit output.
EvalRow evaluate_image(const std::string& name, const Tensor& image, Model& model);
EvalSummary evaluate_images(const std::vector<std::pair<std::string, Tensor>>& images, Model& model);
// All *.ppm files in the directory, sorted by name. InputError if none.
std::vector<std::pair<std::string, Tensor>> load_image_dir(const std::string& dir);

// Header row, one row per image, then a "mean" row.
std::string eval_csv(const EvalSummary& summary);

// "bpp,psnr" CSV (header optional) → points. InputError on malformed lines.
std::vector<RDPoint> read_rd_csv(const std::string& path);

}  // namespace camc
