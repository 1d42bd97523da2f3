#include "icfluc/pdb_io.hpp"

#include "icfluc/geometry.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace icfluc {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::string field(const std::string& line, size_t pos, size_t len) {
    if (pos >= line.size()) return "";
    return trim(line.substr(pos, std::min(len, line.size() - pos)));
}

double parse_coord(const std::string& line, size_t pos, int model, const std::string& what) {
    const std::string raw = field(line, pos, 8);
    try {
        size_t used = 0;
        const double v = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::exception&) {
        throw Error("model " + std::to_string(model) + ": bad " + what +
                    " coordinate field '" + raw + "'");
    }
}

struct ResidueBuilder {
    std::string key;   // resSeq + iCode
    std::string name;
    std::map<std::string, Vec3> atoms;  // first altloc wins per atom name
};

std::string format17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string sidecar_path(const std::string& pdb_path) { return pdb_path + ".ic.csv"; }

PdbBackbone read_pdb_backbone(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open PDB file: " + path);

    std::vector<std::vector<ResidueBuilder>> models;
    std::vector<ResidueBuilder> current;
    std::map<std::string, size_t> current_index;
    char kept_chain = 0;
    bool chain_locked = false;
    bool saw_model_record = false;

    auto flush_model = [&]() {
        if (!current.empty()) {
            models.push_back(std::move(current));
            current.clear();
            current_index.clear();
        }
        chain_locked = false;
        kept_chain = 0;
    };
    auto model_no = [&]() { return static_cast<int>(models.size()) + 1; };

    std::string line;
    while (std::getline(in, line)) {
        const std::string rec = line.substr(0, std::min<size_t>(6, line.size()));
        if (rec.rfind("MODEL", 0) == 0) {
            flush_model();
            saw_model_record = true;
            continue;
        }
        if (rec.rfind("ENDMDL", 0) == 0) {
            flush_model();
            continue;
        }
        if (rec != "ATOM  ") continue;
        if (line.size() < 54) {
            throw Error("model " + std::to_string(model_no()) + ": truncated ATOM record");
        }

        const std::string name = field(line, 12, 4);
        if (name != "N" && name != "CA" && name != "C") continue;

        const char chain = line.size() > 21 ? line[21] : ' ';
        if (!chain_locked) {
            kept_chain = chain;
            chain_locked = true;
        } else if (chain != kept_chain) {
            continue;  // single-chain model: keep the first chain only
        }

        const std::string res_key = field(line, 22, 4) + (line.size() > 26 ? line.substr(26, 1) : " ");
        auto it = current_index.find(res_key);
        if (it == current_index.end()) {
            current_index.emplace(res_key, current.size());
            current.push_back({res_key, field(line, 17, 3), {}});
            it = current_index.find(res_key);
        }
        ResidueBuilder& res = current[it->second];
        if (res.atoms.count(name)) continue;  // later altloc of the same atom

        res.atoms[name] = Vec3(parse_coord(line, 30, model_no(), "x"),
                               parse_coord(line, 38, model_no(), "y"),
                               parse_coord(line, 46, model_no(), "z"));
    }
    if (!saw_model_record || !current.empty()) flush_model();

    if (models.empty()) throw Error("no models with backbone atoms in " + path);

    PdbBackbone out;
    for (size_t mi = 0; mi < models.size(); ++mi) {
        const auto& residues = models[mi];
        BackboneChain chain;
        for (const auto& res : residues) {
            for (const char* atom : {"N", "CA", "C"}) {
                auto at = res.atoms.find(atom);
                if (at == res.atoms.end()) {
                    throw Error("model " + std::to_string(mi + 1) + " residue " + res.key +
                                " (" + res.name + ") is missing backbone atom " + atom);
                }
                chain.positions.push_back(at->second);
            }
        }
        if (mi > 0 && chain.atom_count() != out.models[0].atom_count()) {
            throw Error("model " + std::to_string(mi + 1) + " has " +
                        std::to_string(chain.atom_count()) + " backbone atoms, expected " +
                        std::to_string(out.models[0].atom_count()));
        }
        chain.validate_protein();
        out.models.push_back(std::move(chain));
        if (mi == 0) {
            for (const auto& res : residues) out.residue_names.push_back(res.name);
        }
    }
    return out;
}

namespace {

EnsembleDataset ingest_sidecar(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open sidecar: " + path);

    std::vector<std::string> residue_names;
    std::map<int, std::map<std::string, std::map<int, double>>> values;

    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string tag = "# residues ";
            if (line.rfind(tag, 0) == 0) {
                std::stringstream ss(line.substr(tag.size()));
                std::string name;
                while (std::getline(ss, name, ',')) residue_names.push_back(name);
            }
            continue;
        }
        if (line.rfind("model,", 0) == 0) continue;  // header
        std::stringstream ss(line);
        std::string model_s, kind, index_s, value_s;
        if (!std::getline(ss, model_s, ',') || !std::getline(ss, kind, ',') ||
            !std::getline(ss, index_s, ',') || !std::getline(ss, value_s, ',')) {
            throw Error("malformed sidecar row: " + line);
        }
        values[std::stoi(model_s)][kind][std::stoi(index_s)] = std::stod(value_s);
    }
    if (values.empty()) throw Error("sidecar has no rows: " + path);

    std::vector<InternalCoords> confs;
    for (const auto& [model, kinds] : values) {
        auto fetch = [&](const std::string& kind) {
            auto it = kinds.find(kind);
            if (it == kinds.end()) {
                throw Error("sidecar model " + std::to_string(model) + " lacks " + kind +
                            " rows");
            }
            Eigen::VectorXd v(it->second.size());
            int expect = 0;
            for (const auto& [idx, val] : it->second) {
                if (idx != expect++) {
                    throw Error("sidecar model " + std::to_string(model) +
                                " has non-contiguous " + kind + " indices");
                }
                v[idx] = val;
            }
            return v;
        };
        InternalCoords ic;
        ic.dihedrals = fetch("dihedral");
        ic.bond_angles = fetch("angle");
        ic.bond_lengths = fetch("length");
        ic.validate();
        confs.push_back(std::move(ic));
    }
    return EnsembleDataset::from_conformations(std::move(confs), std::move(residue_names));
}

}  // namespace

EnsembleDataset ingest(const std::string& path, bool use_sidecar) {
    if (use_sidecar && std::filesystem::exists(sidecar_path(path))) {
        return ingest_sidecar(sidecar_path(path));
    }
    PdbBackbone pdb = read_pdb_backbone(path);
    std::vector<InternalCoords> confs;
    confs.reserve(pdb.models.size());
    for (const auto& chain : pdb.models) confs.push_back(cartesian_to_internal(chain));
    return EnsembleDataset::from_conformations(std::move(confs),
                                               std::move(pdb.residue_names));
}

void export_ensemble(const EnsembleDataset& dataset, const std::string& pdb_path) {
    if (dataset.size() == 0) throw Error("cannot export an empty ensemble");
    const int m = dataset.atom_count();
    if (m % 3 != 0) throw Error("export needs a 3-atoms-per-residue chain");
    const int residues = m / 3;
    if (static_cast<int>(dataset.residue_names.size()) != residues) {
        throw Error("residue name count does not match chain length");
    }

    std::ofstream pdb(pdb_path);
    if (!pdb) throw Error("cannot write PDB file: " + pdb_path);
    static const char* kAtomNames[3] = {"N", "CA", "C"};
    static const char* kElements[3] = {"N", "C", "C"};

    char buf[96];
    for (int c = 0; c < dataset.size(); ++c) {
        const BackboneChain chain = internal_to_cartesian(dataset.conformations[c]);
        std::snprintf(buf, sizeof(buf), "MODEL     %4d\n", c + 1);
        pdb << buf;
        for (int a = 0; a < m; ++a) {
            const int res = a / 3;
            const Vec3& p = chain.positions[a];
            std::snprintf(buf, sizeof(buf),
                          "ATOM  %5d  %-3s %-3s A%4d    %8.3f%8.3f%8.3f%6.2f%6.2f"
                          "          %2s\n",
                          a + 1, kAtomNames[a % 3], dataset.residue_names[res].c_str(),
                          res + 1, p.x(), p.y(), p.z(), 1.00, 0.00, kElements[a % 3]);
            pdb << buf;
        }
        pdb << "ENDMDL\n";
    }
    pdb << "END\n";
    if (!pdb) throw Error("write failed: " + pdb_path);

    std::ofstream side(sidecar_path(pdb_path));
    if (!side) throw Error("cannot write sidecar: " + sidecar_path(pdb_path));
    side << "# icfluc internal coordinates v1\n";
    side << "# residues ";
    for (int r = 0; r < residues; ++r) {
        side << (r ? "," : "") << dataset.residue_names[r];
    }
    side << "\nmodel,kind,index,value\n";
    for (int c = 0; c < dataset.size(); ++c) {
        const InternalCoords& ic = dataset.conformations[c];
        for (int i = 0; i < ic.dihedrals.size(); ++i) {
            side << c + 1 << ",dihedral," << i << ',' << format17(ic.dihedrals[i]) << '\n';
        }
        for (int i = 0; i < ic.bond_angles.size(); ++i) {
            side << c + 1 << ",angle," << i << ',' << format17(ic.bond_angles[i]) << '\n';
        }
        for (int i = 0; i < ic.bond_lengths.size(); ++i) {
            side << c + 1 << ",length," << i << ',' << format17(ic.bond_lengths[i]) << '\n';
        }
    }
    if (!side) throw Error("write failed: " + sidecar_path(pdb_path));
}

}  // namespace icfluc
