#include "visage/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "visage/errors.hpp"

namespace visage {

namespace {

cv::Mat to_mat8(const Image& img) {
    cv::Mat mat(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
        auto* row = mat.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(img.at(y, x, c), 0.f, 1.f);
                // BGR channel order on the OpenCV side.
                row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.f));
            }
        }
    }
    return mat;
}

Image from_mat8(const cv::Mat& mat) {
    Image img(mat.rows, mat.cols);
    for (int y = 0; y < mat.rows; ++y) {
        const auto* row = mat.ptr<cv::Vec3b>(y);
        for (int x = 0; x < mat.cols; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = row[x][2 - c] / 255.f;
    }
    return img;
}

cv::Mat to_mat32(const Image& img) {
    cv::Mat mat(img.height, img.width, CV_32FC3);
    for (int y = 0; y < img.height; ++y) {
        auto* row = mat.ptr<cv::Vec3f>(y);
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) row[x][c] = img.at(y, x, c);
    }
    return mat;
}

Image from_mat32(const cv::Mat& mat) {
    Image img(mat.rows, mat.cols);
    for (int y = 0; y < mat.rows; ++y) {
        const auto* row = mat.ptr<cv::Vec3f>(y);
        for (int x = 0; x < mat.cols; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = row[x][c];
    }
    return img;
}

}  // namespace

Image load_image(const std::string& path) {
    cv::Mat mat = cv::imread(path, cv::IMREAD_COLOR);
    if (mat.empty()) throw IoError("cannot load image: " + path);
    return from_mat8(mat);
}

void save_png(const Image& img, const std::string& path) {
    if (img.height <= 0 || img.width <= 0) throw InvalidArgument("save_png: empty image");
    if (!cv::imwrite(path, to_mat8(img))) throw IoError("cannot write image: " + path);
}

void save_jpeg(const Image& img, const std::string& path, int quality) {
    if (img.height <= 0 || img.width <= 0) throw InvalidArgument("save_jpeg: empty image");
    if (quality < 1 || quality > 100) throw InvalidArgument("save_jpeg: quality out of range");
    if (!cv::imwrite(path, to_mat8(img), {cv::IMWRITE_JPEG_QUALITY, quality}))
        throw IoError("cannot write image: " + path);
}

Image resize_bicubic(const Image& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw InvalidArgument("resize_bicubic: target size must be positive");
    cv::Mat out;
    cv::resize(to_mat32(img), out, cv::Size(out_w, out_h), 0, 0, cv::INTER_CUBIC);
    return from_mat32(out);
}

Image gaussian_blur(const Image& img, double sigma) {
    if (sigma <= 0.0) return img;
    cv::Mat out;
    // Kernel size derived from sigma (3-sigma support, forced odd).
    int k = 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1;
    cv::GaussianBlur(to_mat32(img), out, cv::Size(k, k), sigma, sigma, cv::BORDER_REFLECT101);
    return from_mat32(out);
}

Image jpeg_roundtrip(const Image& img, int quality) {
    if (quality < 1 || quality > 100) throw InvalidArgument("jpeg_roundtrip: quality out of range");
    std::vector<unsigned char> buf;
    if (!cv::imencode(".jpg", to_mat8(img), buf, {cv::IMWRITE_JPEG_QUALITY, quality}))
        throw IoError("jpeg encode failed");
    cv::Mat back = cv::imdecode(buf, cv::IMREAD_COLOR);
    if (back.empty()) throw IoError("jpeg decode failed");
    return from_mat8(back);
}

Image add_gaussian_noise(const Image& img, double sigma, Rng& rng) {
    if (sigma <= 0.0) return img;
    Image out = img;
    for (float& v : out.data)
        v = std::clamp(v + static_cast<float>(sigma * rand_normal(rng)), 0.f, 1.f);
    return out;
}

double luminance(const Image& img, int y, int x) {
    return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

double mean_abs_diff(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw InvalidArgument("mean_abs_diff: image shapes differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        acc += std::fabs(static_cast<double>(a.data[i]) - b.data[i]);
    return a.data.empty() ? 0.0 : acc / a.data.size();
}

}  // namespace visage
