//! Report vocabularies: symptom codes and actionable-change messages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symptom {
    /// Numerical error: NaN, infinity, or an all-zero tensor.
    NS,
    /// Unchanged weight.
    UCS,
    /// Saturated activation.
    SAS,
    /// Dead node.
    DNS,
    /// Output out of the label range.
    ORS,
    /// Loss not decreasing.
    LNDS,
    /// Accuracy not increasing.
    ANIS,
    /// Vanishing gradient.
    VGS,
    /// Invalid (nonfinite) loss.
    ILS,
    /// Invalid accuracy.
    IAS,
    /// Correct model: nothing fired.
    CM,
}

impl Symptom {
    pub const ALL: [Symptom; 11] = [
        Symptom::NS,
        Symptom::UCS,
        Symptom::SAS,
        Symptom::DNS,
        Symptom::ORS,
        Symptom::LNDS,
        Symptom::ANIS,
        Symptom::VGS,
        Symptom::ILS,
        Symptom::IAS,
        Symptom::CM,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Symptom::NS => "NS",
            Symptom::UCS => "UCS",
            Symptom::SAS => "SAS",
            Symptom::DNS => "DNS",
            Symptom::ORS => "ORS",
            Symptom::LNDS => "LNDS",
            Symptom::ANIS => "ANIS",
            Symptom::VGS => "VGS",
            Symptom::ILS => "ILS",
            Symptom::IAS => "IAS",
            Symptom::CM => "CM",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Symptom::NS => "Numerical Errors",
            Symptom::UCS => "Unchanged weight",
            Symptom::SAS => "Saturated Activation",
            Symptom::DNS => "Dead Node",
            Symptom::ORS => "Out of Range",
            Symptom::LNDS => "Loss Not Decreasing",
            Symptom::ANIS => "Accuracy Not Increasing",
            Symptom::VGS => "Vanishing Gradient",
            Symptom::ILS => "Invalid Loss",
            Symptom::IAS => "Invalid Accuracy",
            Symptom::CM => "Correct Model",
        }
    }
}

impl fmt::Display for Symptom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Symptom {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Symptom::ALL
            .into_iter()
            .find(|c| c.code() == s)
            .ok_or_else(|| format!("unknown symptom code {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    /// Feed-forward.
    FW,
    /// Back-propagation.
    BW,
    /// Loss and accuracy checks.
    GLOBAL,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::FW => "FW",
            Stage::BW => "BW",
            Stage::GLOBAL => "GLOBAL",
        })
    }
}

/// The monitored value a symptom was found in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quantity {
    /// Layer output before the activation.
    V1,
    /// Layer output after the activation.
    V2,
    /// Gradient flowing back to the layer input.
    V3,
    W,
    DW,
    LOSS,
    ACC,
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantity::V1 => "V1",
            Quantity::V2 => "V2",
            Quantity::V3 => "V3",
            Quantity::W => "W",
            Quantity::DW => "DW",
            Quantity::LOSS => "LOSS",
            Quantity::ACC => "ACC",
        })
    }
}

/// A detected symptom with its coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymptomCode {
    pub code: Symptom,
    pub stage: Option<Stage>,
    pub layer_index: Option<usize>,
    pub quantity: Option<Quantity>,
    pub epoch: usize,
    pub batch: usize,
}

impl SymptomCode {
    pub fn correct_model(epoch: usize, batch: usize) -> Self {
        Self {
            code: Symptom::CM,
            stage: None,
            layer_index: None,
            quantity: None,
            epoch,
            batch,
        }
    }

    pub fn layer(
        code: Symptom,
        stage: Stage,
        layer: usize,
        quantity: Quantity,
        epoch: usize,
        batch: usize,
    ) -> Self {
        Self {
            code,
            stage: Some(stage),
            layer_index: Some(layer),
            quantity: Some(quantity),
            epoch,
            batch,
        }
    }

    pub fn global(code: Symptom, quantity: Quantity, epoch: usize, batch: usize) -> Self {
        Self {
            code,
            stage: Some(Stage::GLOBAL),
            layer_index: None,
            quantity: Some(quantity),
            epoch,
            batch,
        }
    }

    /// Canonical verdict string, e.g. `NS/BW/7/DW`, `LNDS/GLOBAL` or `CM`.
    pub fn render(&self) -> String {
        let mut out = self.code.code().to_string();
        if let Some(stage) = self.stage {
            out.push('/');
            out.push_str(&stage.to_string());
        }
        if let Some(layer) = self.layer_index {
            out.push_str(&format!("/{layer}"));
        }
        if let (Some(q), Some(_)) = (self.quantity, self.layer_index) {
            out.push_str(&format!("/{q}"));
        }
        out
    }

    /// One-line description such as `Layer 7: Numerical Error in delta Weights`.
    pub fn describe(&self) -> String {
        let what = match (self.code, self.quantity) {
            (Symptom::NS, Some(Quantity::DW)) => "Numerical Error in delta Weights".to_string(),
            (Symptom::NS, Some(Quantity::W)) => "Numerical Error in Weights".to_string(),
            (Symptom::NS, Some(Quantity::V3)) => "Numerical Error in backward gradient".to_string(),
            (Symptom::NS, _) => "Numerical Error in layer output".to_string(),
            (Symptom::UCS, Some(Quantity::DW)) => "Unchanged delta Weights".to_string(),
            (Symptom::UCS, Some(Quantity::V3)) => "Unchanged backward gradient".to_string(),
            (Symptom::UCS, _) => "Unchanged layer output".to_string(),
            (code, _) => code.title().to_string(),
        };
        match self.layer_index {
            Some(l) => format!("Layer {l}: {what}"),
            None => what,
        }
    }
}

/// Actionable changes, in guideline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Message {
    MSG0,
    MSG1,
    MSG2,
    MSG3,
    MSG4,
    MSG5,
    MSG6,
}

impl Message {
    pub const ALL: [Message; 7] = [
        Message::MSG0,
        Message::MSG1,
        Message::MSG2,
        Message::MSG3,
        Message::MSG4,
        Message::MSG5,
        Message::MSG6,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Message::MSG0 => "MSG0",
            Message::MSG1 => "MSG1",
            Message::MSG2 => "MSG2",
            Message::MSG3 => "MSG3",
            Message::MSG4 => "MSG4",
            Message::MSG5 => "MSG5",
            Message::MSG6 => "MSG6",
        }
    }

    pub fn guideline(self) -> &'static str {
        match self {
            Message::MSG0 => "Improper Data",
            Message::MSG1 => "Change the loss function",
            Message::MSG2 => "Change the activation function",
            Message::MSG3 => "Change the learning rate",
            Message::MSG4 => "Change the initialization of weight",
            Message::MSG5 => "Change the layer number",
            Message::MSG6 => "Change the optimizer",
        }
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Message {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Message::ALL
            .into_iter()
            .find(|m| m.code() == s)
            .ok_or_else(|| format!("unknown message code {s:?}"))
    }
}

/// A recommended change, optionally pinned to a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageCode {
    pub code: Message,
    pub target_layer: Option<usize>,
}

impl MessageCode {
    pub fn new(code: Message) -> Self {
        Self {
            code,
            target_layer: None,
        }
    }

    pub fn at(code: Message, layer: usize) -> Self {
        Self {
            code,
            target_layer: Some(layer),
        }
    }

    /// `MSG2: Change the activation function at layer: 8`
    pub fn text(&self) -> String {
        let mut s = format!("{}: {}", self.code.code(), self.code.guideline());
        if let Some(l) = self.target_layer {
            s.push_str(&format!(" at layer: {l}"));
        }
        s
    }
}

impl fmt::Display for MessageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}
