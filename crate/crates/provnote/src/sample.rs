//! Small ready-made notebook contents for demos and tests.

use provnote_core::fabric::ItemId;
use provnote_core::{MetaValue, Metadata};

use crate::error::Result;
use crate::notebook::{ImportRequest, Notebook, Payload};

/// Metadata every item of the default data model needs.
pub fn item_metadata(creator: &str, created: &str) -> Metadata {
    Metadata::from([
        ("creator".into(), MetaValue::from(creator)),
        ("created".into(), MetaValue::from(created)),
    ])
}

pub fn file_import(
    target: &str,
    item_type: &str,
    name: &str,
    bytes: &[u8],
    influences: &[ItemId],
    actor: &str,
) -> ImportRequest {
    ImportRequest {
        target: target.into(),
        item_type: item_type.into(),
        name: Some(name.into()),
        metadata: item_metadata(actor, "2026-01-15"),
        payload: Payload::Bytes(bytes.to_vec()),
        influences: influences.to_vec(),
        actor_dn: actor.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleStudy {
    pub plan: ItemId,
    pub manual: ItemId,
    pub raw: ItemId,
    pub specimen: ItemId,
    pub processed: ItemId,
    pub report: ItemId,
    pub package: ItemId,
}

/// A study with all five stages populated: plan and manual feed the raw
/// data and a physical specimen, which feed processed data, then a report,
/// then an archive package.
pub fn seed_study(
    nb: &Notebook,
    root: &str,
    scientist: &str,
    technician: &str,
) -> Result<SampleStudy> {
    nb.create_study(root, "study", Metadata::new())?;
    let at = |stage: &str| format!("{root}/{stage}");
    let plan = nb
        .import(file_import(
            &at("preparation"),
            "study-plan",
            "plan.txt",
            b"study plan",
            &[],
            scientist,
        ))?
        .item
        .item_id;
    let manual = nb
        .import(file_import(
            &at("preparation"),
            "manual",
            "manual.pdf",
            b"operating manual",
            &[],
            scientist,
        ))?
        .item
        .item_id;
    let raw = nb
        .import(file_import(
            &at("execution"),
            "raw-data",
            "raw.csv",
            b"1,2,3\n4,5,6\n",
            &[plan, manual],
            technician,
        ))?
        .item
        .item_id;
    let mut specimen = file_import(
        &at("execution"),
        "physical-sample",
        "specimen-1",
        b"",
        &[plan],
        technician,
    );
    specimen.payload = Payload::Physical {
        archival_location: "freezer 3, rack B".into(),
    };
    specimen
        .metadata
        .insert("description".into(), "tissue specimen".into());
    let specimen = nb.import(specimen)?.item.item_id;
    let processed = nb
        .import(file_import(
            &at("evaluation"),
            "processed-data",
            "means.csv",
            b"2,5\n",
            &[raw, specimen],
            scientist,
        ))?
        .item
        .item_id;
    let report = nb
        .import(file_import(
            &at("interpretation"),
            "report",
            "report.md",
            b"# Findings\n",
            &[processed],
            scientist,
        ))?
        .item
        .item_id;
    let package = nb
        .import(file_import(
            &at("archiving"),
            "archive-package",
            "package.tar",
            b"package",
            &[report],
            scientist,
        ))?
        .item
        .item_id;
    Ok(SampleStudy {
        plan,
        manual,
        raw,
        specimen,
        processed,
        report,
        package,
    })
}
