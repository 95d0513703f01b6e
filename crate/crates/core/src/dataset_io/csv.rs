use std::io::Write;

use crate::channel_sim::CsiSample;

pub const CSV_HEADER: &str = "sample_id,packet_idx,t,rssi,ant,sub,re,im,activity,subject,env";

/// Flattens every CSI entry into one CSV row and returns the row count
/// (excluding the header).
pub fn export_csv<W: Write>(samples: &[CsiSample], mut out: W) -> std::io::Result<usize> {
    writeln!(out, "{CSV_HEADER}")?;
    let mut rows = 0;
    for (id, s) in samples.iter().enumerate() {
        let (n_ant, n_sub) = (s.n_antennas, s.n_subcarriers);
        for p in 0..s.n_packets() {
            let packet = s.packet(p);
            for a in 0..n_ant {
                for m in 0..n_sub {
                    let c = packet[a * n_sub + m];
                    writeln!(
                        out,
                        "{id},{p},{},{},{a},{m},{},{},{},{},{}",
                        s.timestamps_s[p],
                        s.rssi_dbm[p],
                        c.re,
                        c.im,
                        s.activity_label,
                        s.subject_id,
                        s.environment_id
                    )?;
                    rows += 1;
                }
            }
        }
    }
    Ok(rows)
}
