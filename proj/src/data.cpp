#include "tttlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tttlab/common.hpp"

namespace tttlab {

namespace {

void put_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t take_u32(std::ifstream& f, const char* what) {
    uint32_t v;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (!f) throw IoError(std::string("TTTD: truncated file reading ") + what);
    return v;
}

}  // namespace

void save_raw_dataset(const Dataset& ds, const std::string& images_path,
                      const std::string& labels_path) {
    uint32_t c = 1, h = 1, w = 1;
    if (!ds.empty()) {
        const auto& s = ds.samples[0].image.shape;
        c = s[0];
        h = s[1];
        w = s[2];
    }
    std::ofstream f(images_path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + images_path + "' for writing");
    f.write("TTTD", 4);
    put_u32(f, 1u);
    put_u32(f, static_cast<uint32_t>(ds.size()));
    put_u32(f, c);
    put_u32(f, h);
    put_u32(f, w);
    std::vector<unsigned char> buf;
    for (const auto& s : ds.samples) {
        if (s.image.shape != std::vector<int>{int(c), int(h), int(w)})
            throw ShapeError("TTTD: inconsistent image shapes in dataset");
        buf.clear();
        for (float v : s.image.data) {
            const float q = std::clamp(v, 0.0f, 1.0f);
            buf.push_back(static_cast<unsigned char>(std::lround(q * 255.0f)));
        }
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size()));
    }
    if (!f) throw IoError("write failed for '" + images_path + "'");

    std::ofstream lf(labels_path);
    if (!lf) throw IoError("cannot open '" + labels_path + "' for writing");
    lf << "id,label\n";
    for (const auto& s : ds.samples) lf << s.id << "," << s.label << "\n";
    if (!lf) throw IoError("write failed for '" + labels_path + "'");
}

Dataset load_raw_dataset(const std::string& images_path, const std::string& labels_path) {
    std::ifstream f(images_path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + images_path + "'");
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "TTTD", 4) != 0)
        throw IoError("TTTD: bad magic in '" + images_path + "'");
    const uint32_t version = take_u32(f, "version");
    if (version != 1) throw IoError("TTTD: unsupported version " + std::to_string(version));
    const uint32_t count = take_u32(f, "count");
    const uint32_t c = take_u32(f, "channels");
    const uint32_t h = take_u32(f, "height");
    const uint32_t w = take_u32(f, "width");
    if (c == 0 || h == 0 || w == 0) throw IoError("TTTD: zero extent");

    const size_t pix = size_t(c) * h * w;
    std::vector<unsigned char> buf(pix);
    Dataset ds;
    for (uint32_t i = 0; i < count; ++i) {
        f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pix));
        if (!f) throw IoError("TTTD: truncated image data (expected " + std::to_string(count) +
                              " images, failed at " + std::to_string(i) + ")");
        Sample s;
        s.image = Tensor<float>({int(c), int(h), int(w)});
        for (size_t k = 0; k < pix; ++k) s.image.data[k] = float(buf[k]) / 255.0f;
        ds.samples.push_back(std::move(s));
    }

    std::ifstream lf(labels_path);
    if (!lf) throw IoError("cannot open '" + labels_path + "'");
    std::string line;
    if (!std::getline(lf, line) || line != "id,label")
        throw IoError("labels: expected header 'id,label' in '" + labels_path + "'");
    size_t row = 0;
    int max_label = -1;
    while (std::getline(lf, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw IoError("labels: malformed row " + std::to_string(row + 2));
        if (row >= ds.samples.size()) throw IoError("labels: more labels than images");
        ds.samples[row].id = line.substr(0, comma);
        int label;
        try {
            label = std::stoi(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw IoError("labels: bad label on row " + std::to_string(row + 2));
        }
        if (label < 0) throw IoError("labels: label out of range on row " + std::to_string(row + 2));
        ds.samples[row].label = label;
        max_label = std::max(max_label, label);
        ++row;
    }
    if (row != ds.samples.size())
        throw IoError("labels: count mismatch (" + std::to_string(row) + " labels, " +
                      std::to_string(ds.samples.size()) + " images)");
    ds.num_classes = max_label + 1;
    return ds;
}

void write_pgm(const Tensor<float>& image, const std::string& path) {
    if (image.rank() != 3 || image.shape[0] != 1) throw ShapeError("pgm: expected [1,H,W]");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << "P5\n" << image.shape[2] << " " << image.shape[1] << "\n255\n";
    for (float v : image.data)
        f.put(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    if (!f) throw IoError("write failed for '" + path + "'");
}

}  // namespace tttlab
