use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::ground_truth::{ContactChannel, Pole};

/// One close operation: vibration plus up to three contact channels on the
/// same clock.
#[derive(Debug, Clone, PartialEq)]
pub struct OperationRecord {
    pub op_number: i64,
    pub vibration: Waveform,
    pub contacts: Vec<ContactChannel>,
}

impl OperationRecord {
    pub fn new(op_number: i64, vibration: Waveform, contacts: Vec<ContactChannel>) -> Result<Self> {
        let rec = Self {
            op_number,
            vibration,
            contacts,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.contacts.len() > 3 {
            return Err(Error::data("at most three contact channels per record"));
        }
        for (i, ch) in self.contacts.iter().enumerate() {
            if self.contacts[..i].iter().any(|c| c.pole == ch.pole) {
                return Err(Error::data(format!("duplicate contact channel for pole {}", ch.pole)));
            }
            if ch.voltage.len() != self.vibration.len() {
                return Err(Error::data(format!(
                    "channel contact_{} has {} samples but vibration has {}",
                    ch.pole,
                    ch.voltage.len(),
                    self.vibration.len()
                )));
            }
            if ch.sampling_rate_hz != self.vibration.sampling_rate_hz() {
                return Err(Error::data(format!(
                    "channel contact_{} runs at {} Hz but vibration at {} Hz",
                    ch.pole,
                    ch.sampling_rate_hz,
                    self.vibration.sampling_rate_hz()
                )));
            }
        }
        Ok(())
    }

    pub fn contact(&self, pole: Pole) -> Option<&ContactChannel> {
        self.contacts.iter().find(|c| c.pole == pole)
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.vibration.sampling_rate_hz()
    }

    pub fn duration_ms(&self) -> f64 {
        self.vibration.duration_ms()
    }
}
