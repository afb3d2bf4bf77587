//! Line-oriented network descriptor format (`.net`).
//!
//! The first non-blank line is the version header `neuromax-net v1`.
//! Comments start with `#`. Each remaining line describes one layer:
//!
//! ```text
//! name type kernel stride in_w in_h in_c out_c pad
//! ```
//!
//! `type` is `standard`, `depthwise` or `pointwise`; `in_w`/`in_h` are the
//! unpadded input dims and `pad` the symmetric zero padding applied before
//! the layer runs.

use crate::dataflow::{ConvType, LayerConfig};
use crate::error::{Error, Result};

pub const NET_HEADER: &str = "neuromax-net v1";

/// One descriptor entry, as written in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetLayer {
    pub name: String,
    pub conv_type: ConvType,
    pub kernel: u32,
    pub stride: u32,
    pub in_w: u32,
    pub in_h: u32,
    pub in_c: u32,
    pub out_c: u32,
    pub padding: u32,
}

impl NetLayer {
    /// Padded layer configuration for the simulator.
    pub fn to_layer_config(&self) -> Result<LayerConfig> {
        LayerConfig::new(
            self.conv_type,
            self.kernel,
            self.stride,
            self.in_w + 2 * self.padding,
            self.in_h + 2 * self.padding,
            self.in_c,
            self.out_c,
        )
    }
}

pub fn parse_descriptor(text: &str) -> Result<Vec<NetLayer>> {
    let mut layers = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != NET_HEADER {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected header '{NET_HEADER}', got '{line}'"),
                });
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 9 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 9 fields, got {}", fields.len()),
            });
        }
        let conv_type = match fields[1] {
            "standard" => ConvType::Standard,
            "depthwise" => ConvType::Depthwise,
            "pointwise" => ConvType::Pointwise,
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("unknown convolution type '{other}'"),
                })
            }
        };
        let num = |s: &str, what: &str| -> Result<u32> {
            s.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad {what} '{s}'"),
            })
        };
        let layer = NetLayer {
            name: fields[0].to_string(),
            conv_type,
            kernel: num(fields[2], "kernel")?,
            stride: num(fields[3], "stride")?,
            in_w: num(fields[4], "in_w")?,
            in_h: num(fields[5], "in_h")?,
            in_c: num(fields[6], "in_c")?,
            out_c: num(fields[7], "out_c")?,
            padding: num(fields[8], "padding")?,
        };
        // surface config errors with the line number attached
        layer.to_layer_config().map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        layers.push(layer);
    }
    if !header_seen {
        return Err(Error::Parse {
            line: 1,
            msg: format!("missing '{NET_HEADER}' header"),
        });
    }
    Ok(layers)
}

pub fn serialize_descriptor(layers: &[NetLayer]) -> String {
    let mut out = String::from(NET_HEADER);
    out.push('\n');
    out.push_str("# name type kernel stride in_w in_h in_c out_c pad\n");
    for l in layers {
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {} {}\n",
            l.name, l.conv_type, l.kernel, l.stride, l.in_w, l.in_h, l.in_c, l.out_c, l.padding
        ));
    }
    out
}

/// Strict shape chaining for tensor-mode execution: each layer must consume
/// exactly what the previous one produced.
pub fn validate_execution_chain(layers: &[NetLayer]) -> Result<()> {
    for (i, pair) in layers.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        let cfg = a.to_layer_config()?;
        if b.in_c != cfg.out_c {
            return Err(Error::Shape(format!(
                "layer '{}' expects {} input channels but '{}' produces {}",
                b.name, b.in_c, a.name, cfg.out_c
            )));
        }
        if (b.in_w, b.in_h) != (cfg.out_w, cfg.out_h) {
            return Err(Error::Shape(format!(
                "layer '{}' (index {}) expects {}x{} input but '{}' produces {}x{}",
                b.name,
                i + 1,
                b.in_w,
                b.in_h,
                a.name,
                cfg.out_w,
                cfg.out_h
            )));
        }
    }
    Ok(())
}

/// Conv-layer shape lists of three well-known CNNs, transcribed from their
/// published architectures for throughput/latency studies. Pooling and
/// fully-connected layers are not convolution work and are omitted; the
/// ResNet-34 7x7 stem needs kernel decomposition, which this core does not
/// implement, so the file lists the supported body only.
pub mod bundled {
    pub const VGG16: &str = include_str!("../../descriptors/vgg16.net");
    pub const MOBILENET_V1: &str = include_str!("../../descriptors/mobilenet_v1.net");
    pub const RESNET34: &str = include_str!("../../descriptors/resnet34.net");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_serialize_round_trip() {
        let text = "neuromax-net v1\n# c\nl0 standard 3 1 12 12 3 8 1\nl1 pointwise 1 1 12 12 8 16 0\n";
        let layers = parse_descriptor(text).unwrap();
        assert_eq!(layers.len(), 2);
        let again = parse_descriptor(&serialize_descriptor(&layers)).unwrap();
        assert_eq!(layers, again);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_descriptor("neuromax-net v1\nbad line here\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("wrong error {other:?}"),
        }
        let err = parse_descriptor("l0 standard 3 1 12 12 3 8 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err =
            parse_descriptor("neuromax-net v1\nl0 standard 7 1 12 12 3 8 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn bundled_descriptors_parse() {
        assert_eq!(parse_descriptor(bundled::VGG16).unwrap().len(), 13);
        assert_eq!(parse_descriptor(bundled::MOBILENET_V1).unwrap().len(), 27);
        assert_eq!(parse_descriptor(bundled::RESNET34).unwrap().len(), 35);
    }

    #[test]
    fn chain_validation() {
        let ok = parse_descriptor(
            "neuromax-net v1\nl0 standard 3 1 12 12 3 8 1\nl1 standard 3 1 12 12 8 4 1\n",
        )
        .unwrap();
        validate_execution_chain(&ok).unwrap();
        let bad = parse_descriptor(
            "neuromax-net v1\nl0 standard 3 1 12 12 3 8 1\nl1 standard 3 1 12 12 5 4 1\n",
        )
        .unwrap();
        assert!(matches!(validate_execution_chain(&bad), Err(Error::Shape(_))));
    }
}
