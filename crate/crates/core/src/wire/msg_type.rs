use std::fmt;
use std::str::FromStr;

/// Which logical plane a message type belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Plane {
    Control,
    Data,
    /// Measurement probes; allowed on either channel.
    Bench,
}

/// The two emulated links between a glass and the platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Control,
    Data,
}

impl Channel {
    pub fn code(self) -> u8 {
        match self {
            Channel::Control => 0,
            Channel::Data => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Channel::Control),
            1 => Some(Channel::Data),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Control => "ctrl",
            Channel::Data => "data",
        }
    }
}

macro_rules! msg_types {
    ($($variant:ident = $code:literal, $name:literal, $plane:ident;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        #[repr(u8)]
        pub enum MsgType {
            $($variant = $code,)*
        }

        impl MsgType {
            pub const ALL: &'static [MsgType] = &[$(MsgType::$variant,)*];

            pub fn from_code(code: u8) -> Option<Self> {
                match code {
                    $($code => Some(MsgType::$variant),)*
                    _ => None,
                }
            }

            pub fn name(self) -> &'static str {
                match self {
                    $(MsgType::$variant => $name,)*
                }
            }

            pub fn plane(self) -> Plane {
                match self {
                    $(MsgType::$variant => Plane::$plane,)*
                }
            }
        }

        impl FromStr for MsgType {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(MsgType::$variant),)*
                    other => Err(format!("unknown message type '{other}'")),
                }
            }
        }
    };
}

msg_types! {
    Hello = 1, "HELLO", Control;
    HelloAck = 2, "HELLO_ACK", Control;
    ContextUpdate = 3, "CONTEXT_UPDATE", Control;
    ServiceActivate = 4, "SERVICE_ACTIVATE", Control;
    ServiceDeactivate = 5, "SERVICE_DEACTIVATE", Control;
    Heartbeat = 6, "HEARTBEAT", Control;
    Error = 7, "ERROR", Control;
    ActuatorCmd = 8, "ACTUATOR_CMD", Control;
    NavSelectDest = 16, "NAV_SELECT_DEST", Data;
    NavInstruction = 17, "NAV_INSTRUCTION", Data;
    NavArrived = 18, "NAV_ARRIVED", Data;
    NavDestInfo = 19, "NAV_DEST_INFO", Data;
    Frame = 32, "FRAME", Data;
    RecogResult = 33, "RECOG_RESULT", Data;
    EchoReq = 48, "ECHO_REQ", Bench;
    EchoResp = 49, "ECHO_RESP", Bench;
    UploadBegin = 50, "UPLOAD_BEGIN", Bench;
    UploadChunk = 51, "UPLOAD_CHUNK", Bench;
    UploadEnd = 52, "UPLOAD_END", Bench;
    UploadAck = 53, "UPLOAD_ACK", Bench;
}

impl MsgType {
    pub fn code(self) -> u8 {
        self as u8
    }

    /// Control-plane types never ride the data channel and vice versa.
    pub fn allowed_on(self, channel: Channel) -> bool {
        match (self.plane(), channel) {
            (Plane::Bench, _) => true,
            (Plane::Control, Channel::Control) | (Plane::Data, Channel::Data) => true,
            _ => false,
        }
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
