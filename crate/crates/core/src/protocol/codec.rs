use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::value::RawValue;
use serde_json::{Map, Value};

use super::{BroadcastMessage, EigenvalueMessage, Message, ProjectorMessage, SCHEMA_VERSION};
use crate::error::{Error, Result};

struct WireMatrix<'a>(&'a DMatrix<f64>);

impl Serialize for WireMatrix<'_> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::{Error as _, SerializeStruct};
        let m = self.0;
        let mut text = String::with_capacity(m.len() * 24 + 2);
        text.push('[');
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if i + j > 0 {
                    text.push(',');
                }
                text.push_str(&format!("{:.16e}", m[(i, j)]));
            }
        }
        text.push(']');
        let data = RawValue::from_string(text).map_err(S::Error::custom)?;
        let mut s = serializer.serialize_struct("Matrix", 3)?;
        s.serialize_field("rows", &m.nrows())?;
        s.serialize_field("cols", &m.ncols())?;
        s.serialize_field("data", &data)?;
        s.end()
    }
}

#[derive(Serialize)]
struct WireProjector<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    schema_version: u32,
    client_id: &'a str,
    round: u8,
    n: usize,
    epsilon: f64,
    delta: f64,
    u_hat: WireMatrix<'a>,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    warnings: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    reported_weight: Option<f64>,
}

#[derive(Serialize)]
struct WireBroadcast<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    schema_version: u32,
    round: u8,
    u_hat_global: WireMatrix<'a>,
}

#[derive(Serialize)]
struct WireEigenvalues<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    schema_version: u32,
    client_id: &'a str,
    round: u8,
    lambda_hat: WireMatrix<'a>,
}

/// Serialises a message to its canonical JSON bytes.
///
/// Non-finite matrix entries cannot be represented and are rejected.
pub fn encode(msg: &Message) -> Result<Vec<u8>> {
    let bytes = match msg {
        Message::Projector(m) => serde_json::to_vec(&WireProjector {
            kind: msg.type_tag(),
            schema_version: SCHEMA_VERSION,
            client_id: &m.client_id,
            round: 1,
            n: m.n,
            epsilon: m.epsilon,
            delta: m.delta,
            u_hat: WireMatrix(&m.u_hat),
            warnings: &m.warnings,
            reported_weight: m.reported_weight,
        }),
        Message::Broadcast(m) => serde_json::to_vec(&WireBroadcast {
            kind: msg.type_tag(),
            schema_version: SCHEMA_VERSION,
            round: 2,
            u_hat_global: WireMatrix(&m.u_hat_global),
        }),
        Message::Eigenvalue(m) => serde_json::to_vec(&WireEigenvalues {
            kind: msg.type_tag(),
            schema_version: SCHEMA_VERSION,
            client_id: &m.client_id,
            round: 2,
            lambda_hat: WireMatrix(&m.lambda_hat),
        }),
    };
    bytes.map_err(|e| Error::decode("<message>", format!("cannot encode: {e}")))
}

/// Parses and validates a message.
pub fn decode(bytes: &[u8]) -> Result<Message> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| Error::decode("<root>", e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| Error::decode("<root>", "expected a JSON object"))?;

    let kind = str_field(obj, "type")?;
    let version = u64_field(obj, "schema_version")?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(Error::decode("schema_version", format!("expected {SCHEMA_VERSION}, got {version}")));
    }
    let msg = match kind {
        "projector" => {
            expect_round(obj, 1)?;
            let warnings = match obj.get("warnings") {
                None => Vec::new(),
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|w| w.as_str().map(str::to_owned).ok_or_else(|| Error::decode("warnings", "expected strings")))
                    .collect::<Result<_>>()?,
                Some(_) => return Err(Error::decode("warnings", "expected an array")),
            };
            Message::Projector(ProjectorMessage {
                client_id: str_field(obj, "client_id")?.to_owned(),
                u_hat: matrix_field(obj, "u_hat")?,
                n: usize::try_from(u64_field(obj, "n")?).map_err(|_| Error::decode("n", "out of range"))?,
                epsilon: f64_field(obj, "epsilon")?,
                delta: f64_field(obj, "delta")?,
                warnings,
                reported_weight: match obj.get("reported_weight") {
                    None => None,
                    Some(_) => Some(f64_field(obj, "reported_weight")?),
                },
            })
        }
        "broadcast" => {
            expect_round(obj, 2)?;
            Message::Broadcast(BroadcastMessage { u_hat_global: matrix_field(obj, "u_hat_global")? })
        }
        "eigenvalues" => {
            expect_round(obj, 2)?;
            Message::Eigenvalue(EigenvalueMessage {
                client_id: str_field(obj, "client_id")?.to_owned(),
                lambda_hat: matrix_field(obj, "lambda_hat")?,
            })
        }
        other => return Err(Error::decode("type", format!("unknown message type `{other}`"))),
    };
    msg.validate()?;
    Ok(msg)
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value> {
    obj.get(name).ok_or_else(|| Error::decode(name, "missing"))
}

fn str_field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a str> {
    field(obj, name)?.as_str().ok_or_else(|| Error::decode(name, "expected a string"))
}

fn u64_field(obj: &Map<String, Value>, name: &str) -> Result<u64> {
    field(obj, name)?.as_u64().ok_or_else(|| Error::decode(name, "expected a non-negative integer"))
}

fn f64_field(obj: &Map<String, Value>, name: &str) -> Result<f64> {
    field(obj, name)?.as_f64().ok_or_else(|| Error::decode(name, "expected a number"))
}

fn expect_round(obj: &Map<String, Value>, round: u64) -> Result<()> {
    let got = u64_field(obj, "round")?;
    if got != round {
        return Err(Error::decode("round", format!("expected {round}, got {got}")));
    }
    Ok(())
}

fn matrix_field(obj: &Map<String, Value>, name: &str) -> Result<DMatrix<f64>> {
    let m = field(obj, name)?.as_object().ok_or_else(|| Error::decode(name, "expected a matrix object"))?;
    let rows = m.get("rows").and_then(Value::as_u64).ok_or_else(|| Error::decode(format!("{name}.rows"), "missing or invalid"))?;
    let cols = m.get("cols").and_then(Value::as_u64).ok_or_else(|| Error::decode(format!("{name}.cols"), "missing or invalid"))?;
    let data = m
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::decode(format!("{name}.data"), "missing or not an array"))?;
    let (rows, cols) = (rows as usize, cols as usize);
    if rows.checked_mul(cols) != Some(data.len()) {
        return Err(Error::decode(
            format!("{name}.data"),
            format!("{rows}x{cols} matrix needs {} entries, found {}", rows.saturating_mul(cols), data.len()),
        ));
    }
    let values = data
        .iter()
        .map(|v| v.as_f64().ok_or_else(|| Error::decode(format!("{name}.data"), "non-numeric entry")))
        .collect::<Result<Vec<f64>>>()?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spiked_model::random_orthonormal;
    use proptest::prelude::*;

    fn projector(u: DMatrix<f64>) -> Message {
        Message::Projector(ProjectorMessage {
            client_id: "site-a".into(),
            u_hat: u,
            n: 1200,
            epsilon: 0.5,
            delta: 0.1,
            warnings: vec![],
            reported_weight: None,
        })
    }

    #[test]
    fn projector_round_trip_is_bit_exact() {
        let msg = projector(random_orthonormal(3, 1, 4).unwrap());
        let bytes = encode(&msg).unwrap();
        let back = decode(&bytes).unwrap();
        let (Message::Projector(a), Message::Projector(b)) = (&msg, &back) else { panic!() };
        for (x, y) in a.u_hat.iter().zip(b.u_hat.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(msg, back);
    }

    #[test]
    fn reported_weight_is_optional_on_the_wire() {
        let Message::Projector(mut m) = projector(random_orthonormal(3, 1, 5).unwrap()) else { panic!() };
        assert!(!String::from_utf8(encode(&m.clone().into()).unwrap()).unwrap().contains("reported_weight"));
        m.reported_weight = Some(1.0 / 3.0);
        let msg: Message = m.clone().into();
        assert_eq!(decode(&encode(&msg).unwrap()).unwrap(), msg);
        m.reported_weight = Some(-1.0);
        let text = String::from_utf8(encode(&m.into()).unwrap()).unwrap();
        assert!(matches!(decode(text.as_bytes()), Err(Error::Decode { ref field, .. }) if field == "reported_weight"));
    }

    #[test]
    fn wire_layout() {
        let u = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let text = String::from_utf8(encode(&projector(u)).unwrap()).unwrap();
        assert!(text.starts_with(r#"{"type":"projector","schema_version":1,"client_id":"site-a","round":1"#));
        assert!(text.contains(r#""u_hat":{"rows":2,"cols":1,"data":[1.0000000000000000e0,0.0000000000000000e0]}"#));
    }

    #[test]
    fn truncated_input_is_an_error() {
        let bytes = encode(&projector(random_orthonormal(4, 2, 1).unwrap())).unwrap();
        for cut in [0, 1, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Decode { .. })));
        }
    }

    #[test]
    fn non_orthonormal_payload_is_rejected() {
        let mut u = random_orthonormal(5, 2, 3).unwrap();
        u[(0, 0)] += 1e-2;
        let bytes = encode(&projector(u)).unwrap();
        match decode(&bytes) {
            Err(Error::Decode { field, .. }) => assert_eq!(field, "u_hat"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_errors_name_the_field() {
        let cases = [
            (r#"{"type":"gossip","schema_version":1}"#, "type"),
            (r#"{"type":"broadcast","schema_version":9}"#, "schema_version"),
            (r#"{"type":"broadcast","schema_version":1,"round":2,"u_hat_global":{"rows":2,"cols":1,"data":[1]}}"#, "u_hat_global.data"),
            (r#"{"type":"eigenvalues","schema_version":1,"round":1,"client_id":"a","lambda_hat":{"rows":1,"cols":1,"data":[1]}}"#, "round"),
            (r#"{"type":"eigenvalues","schema_version":1,"round":2,"client_id":"a","lambda_hat":{"rows":2,"cols":2,"data":[1,0,3,1]}}"#, "lambda_hat"),
            (r#"{"type":"eigenvalues","schema_version":1,"round":2,"client_id":"../x","lambda_hat":{"rows":1,"cols":1,"data":[1]}}"#, "client_id"),
        ];
        for (text, want) in cases {
            match decode(text.as_bytes()) {
                Err(Error::Decode { field, .. }) => assert_eq!(field, want, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    proptest! {
        #[test]
        fn eigenvalue_blocks_round_trip(entries in proptest::collection::vec(-1e300f64..1e300, 6), tiny in -1e-300f64..1e-300) {
            let mut l = DMatrix::from_fn(3, 3, |i, j| {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                entries[a + b]
            });
            l[(1, 1)] = tiny;
            let msg = Message::Eigenvalue(EigenvalueMessage { client_id: "c.1".into(), lambda_hat: l });
            let back = decode(&encode(&msg).unwrap()).unwrap();
            prop_assert_eq!(back, msg);
        }
    }
}
