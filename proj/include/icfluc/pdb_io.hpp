#pragma once

#include "icfluc/ensemble.hpp"

#include <string>
#include <vector>

namespace icfluc {

// Raw parse of a multi-MODEL PDB coordinate section: N/CA/C atoms of the
// first chain, first altloc, HETATM skipped. Every residue must contribute
// exactly the three backbone atoms and every model the same residues.
struct PdbBackbone {
    std::vector<BackboneChain> models;
    std::vector<std::string> residue_names;
};

PdbBackbone read_pdb_backbone(const std::string& path);

// Sidecar path convention: "<pdb path>.ic.csv".
std::string sidecar_path(const std::string& pdb_path);

// Builds the dataset from a PDB file. When the exporter's full-precision
// sidecar sits next to the file it is used instead of re-measuring the
// rounded PDB coordinates (set use_sidecar = false to force PDB parsing).
EnsembleDataset ingest(const std::string& path, bool use_sidecar = true);

// Writes a multi-model PDB in the canonical reconstruction frame (fixed
// %8.3f coordinate columns) plus the sidecar with exact internal
// coordinates; the pair re-ingests losslessly.
void export_ensemble(const EnsembleDataset& dataset, const std::string& pdb_path);

}  // namespace icfluc
