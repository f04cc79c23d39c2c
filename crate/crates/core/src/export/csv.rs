use std::io::Write;

use super::model::ExportDocument;
use crate::audit::FINGERPRINT_FIELDS;

/// Writes one row per response with the fingerprint columns in their
/// canonical order.
pub fn write_fingerprint_csv<W: Write>(doc: &ExportDocument, out: W) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(FINGERPRINT_FIELDS)?;
    for response in &doc.responses {
        writer.write_record(response.record.fingerprint.to_scalars().iter().map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}
